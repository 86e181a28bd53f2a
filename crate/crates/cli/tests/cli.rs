use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qssep(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qssep"))
        .env_remove("QSSEP_OUT_DIR")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn header(path: &Path) -> Vec<String> {
    read_csv(path).0
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(qssep(tmp.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(qssep(tmp.path(), &["spectrum", "--help"]).status.code(), Some(0));
    assert_eq!(qssep(tmp.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(qssep(tmp.path(), &["spectrum", "--grid", "many"]).status.code(), Some(2));
    // parameter errors raised by the numerical core
    assert_eq!(qssep(tmp.path(), &["ssep", "--na", "1.5"]).status.code(), Some(2));
    assert_eq!(qssep(tmp.path(), &["levelstats", "--counts", "1,2,3"]).status.code(), Some(2));
    assert_eq!(qssep(tmp.path(), &["levelstats", "--counts", "1,2,3,5", "--budget", "100"]).status.code(), Some(2));
    assert_eq!(qssep(tmp.path(), &["simulate", "--na", "0.5", "--alpha1", "1"]).status.code(), Some(2));
    let help = String::from_utf8(qssep(tmp.path(), &["--help"]).stdout).unwrap();
    assert!(help.contains("cumulants.csv") && help.contains("Exit codes"));
}

#[test]
fn io_failure_exits_five() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = qssep(&blocker.join("sub"), &["ssep"]);
    assert_eq!(o.status.code(), Some(5));
    let o = Command::new(env!("CARGO_BIN_EXE_qssep"))
        .args(["--out", tmp.path().to_str().unwrap(), "--config", "/nonexistent.toml", "ssep"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qssep(tmp.path(), &["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&tmp.path().join("selftest.csv"));
    assert_eq!(h, ["check", "passed", "detail"]);
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[1] == "true"));
    assert_eq!(manifest(tmp.path())["summary"]["failed"], serde_json::json!([]));
}

#[test]
fn wigner_spectrum_matches_semicircle() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qssep(tmp.path(), &["spectrum", "--spec", "wigner", "--s", "1.0", "--grid", "400"]);
    assert!(o.status.success());
    let (h, rows) = read_csv(&tmp.path().join("spectrum.csv"));
    assert_eq!(h, ["lambda", "density", "reference"]);
    assert_eq!(rows.len(), 400);
    assert_eq!(header(&tmp.path().join("atoms.csv")), ["lambda", "mass"]);
    let m = manifest(tmp.path());
    assert!(m["summary"]["l1_distance"].as_f64().unwrap() < 1e-3);
    assert_eq!(m["subcommand"], "spectrum");
    for key in ["tool", "version", "config", "seed", "threads", "started_unix", "wall_time_s", "outputs"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn ssep_cumulant_table() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(qssep(tmp.path(), &["ssep", "--na", "1", "--nb", "0", "--n", "1"]).status.success());
    let (h, rows) = read_csv(&tmp.path().join("cumulants.csv"));
    assert_eq!(h, ["order", "value", "scaled"]);
    let expect = [1.0, 1.0 / 3.0, 1.0 / 15.0, -1.0 / 105.0];
    for (r, e) in rows.iter().zip(expect) {
        assert!((r[1].parse::<f64>().unwrap() - e).abs() < 1e-8);
    }
    let (h, rows) = read_csv(&tmp.path().join("mu.csv"));
    assert_eq!(h, ["lambda", "omega", "mu", "mu_infinite"]);
    assert!(rows.len() > 30);
}

#[test]
fn entanglement_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "--seed", "3", "entanglement", "--simulate", "--cs", "0.3,0.6", "--qs", "1,2", "--n", "24",
        "--trajectories", "2", "--t-max", "0.2", "--records", "10", "--window-lo", "0.1", "--window-hi", "0.2",
    ];
    let o = qssep(tmp.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&tmp.path().join("mutual_info_analytic.csv"));
    assert_eq!(h, ["c", "q", "i_value", "i_second_order"]);
    assert_eq!(rows.len(), 4);
    let (h, rows) = read_csv(&tmp.path().join("mutual_info.csv"));
    assert_eq!(h, ["t", "c", "q", "i_value", "stderr"]);
    assert!(!rows.is_empty());
    let (h, rows) = read_csv(&tmp.path().join("mutual_info_window.csv"));
    assert_eq!(h, ["c", "q", "mean", "stderr", "samples", "window_lo", "window_hi"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn simulate_loops_and_g2_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("sim");
    assert!(qssep(&d, &["simulate", "--n", "12", "--trajectories", "3", "--t-max", "0.05", "--records", "2"]).status.success());
    let (h, rows) = read_csv(&d.join("density.csv"));
    assert_eq!(h, ["t_macro", "observable", "value", "stderr"]);
    assert_eq!(rows.len(), 24);
    assert_eq!(rows[0][1], "n_1");
    let (h, rows) = read_csv(&d.join("steady_profile.csv"));
    assert_eq!(h, ["site", "x", "density"]);
    assert_eq!(rows.len(), 12);

    let d = tmp.path().join("loops");
    let o = qssep(&d, &["loops", "--n", "12", "--trajectories", "2", "--samples", "5", "--xs", "0.25,0.5,0.75"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&d.join("loops.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0][1].starts_with("sim:") && rows[1][1].starts_with("analytic:"));

    let d = tmp.path().join("g2");
    let o = qssep(&d, &["g2-dynamics", "--grid", "60", "--times", "0.01,0.02", "--mc-n", "16", "--trajectories", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&d.join("g2_dynamics.csv"));
    assert_eq!(rows.iter().filter(|r| r[1].starts_with("pde:")).count(), 6);
    assert_eq!(rows.iter().filter(|r| r[1].starts_with("mc:")).count(), 6);
    assert_eq!(qssep(&d, &["g2-dynamics", "--times", "0.1,0.05"]).status.code(), Some(2));
}

#[test]
fn levelstats_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qssep(tmp.path(), &["levelstats", "--sector", "c+1", "--counts", "2,2,2,3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&tmp.path().join("eigenvalues.csv"));
    assert_eq!(h, ["sector", "n", "kappa", "g", "index", "eigenvalue"]);
    assert_eq!(rows[0][0], "c+1");
    let (h, rows) = read_csv(&tmp.path().join("histograms.csv"));
    assert_eq!(h, ["kind", "center", "density", "reference_poisson", "reference_goe"]);
    assert_eq!(rows.len(), 60);
    let (h, rows) = read_csv(&tmp.path().join("summary.csv"));
    assert_eq!(h, ["sector", "n", "k", "weights", "g", "dim", "n_eig", "r_tilde_mean", "r_tilde_err"]);
    assert_eq!(rows.len(), 1);
    let r: f64 = rows[0][7].parse().unwrap();
    assert!(r > 0.0 && r < 1.0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--seed", "9", "simulate", "--n", "10", "--trajectories", "4", "--t-max", "0.05", "--records", "3"];
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(qssep(&a, &args).status.success());
    assert!(qssep(&b, &args).status.success());
    let single = ["--seed", "9", "--threads", "1", "simulate", "--n", "10", "--trajectories", "4", "--t-max", "0.05", "--records", "3"];
    assert!(qssep(&c, &single).status.success());
    let density = fs::read(a.join("density.csv")).unwrap();
    assert_eq!(density, fs::read(b.join("density.csv")).unwrap());
    assert_eq!(density, fs::read(c.join("density.csv")).unwrap());
    assert_eq!(fs::read(a.join("config.toml")).unwrap(), fs::read(b.join("config.toml")).unwrap());

    // the echoed config reproduces the run
    let d = tmp.path().join("d");
    let cfg = a.join("config.toml");
    assert!(qssep(&d, &["--config", cfg.to_str().unwrap(), "simulate"]).status.success());
    assert_eq!(density, fs::read(d.join("density.csv")).unwrap());

    let other = tmp.path().join("e");
    assert!(qssep(&other, &["--seed", "10", "simulate", "--n", "10", "--trajectories", "4", "--t-max", "0.05", "--records", "3"]).status.success());
    assert_ne!(density, fs::read(other.join("density.csv")).unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 4\n[ssep]\nn = 3\ncumulants = 2\npoints = 5\n").unwrap();
    let out = tmp.path().join("o");
    assert!(qssep(&out, &["--config", cfg.to_str().unwrap(), "ssep", "--cumulants", "3"]).status.success());
    let (_, rows) = read_csv(&out.join("cumulants.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 3.0 * rows[0][1].parse::<f64>().unwrap());
    let echo: toml::Table = toml::from_str(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echo["seed"].as_integer(), Some(4));
    assert_eq!(echo["ssep"]["n"].as_integer(), Some(3));
    assert_eq!(echo["ssep"]["cumulants"].as_integer(), Some(3));
    assert_eq!(echo["ssep"]["points"].as_integer(), Some(5));

    fs::write(&cfg, "[ssep]\nwidth = 3\n").unwrap();
    assert_eq!(qssep(&out, &["--config", cfg.to_str().unwrap(), "ssep"]).status.code(), Some(2));
    fs::write(&cfg, "[sepp]\nn = 3\n").unwrap();
    assert_eq!(qssep(&out, &["--config", cfg.to_str().unwrap(), "ssep"]).status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_qssep"))
        .env("QSSEP_OUT_DIR", &dir)
        .args(["ssep", "--n", "4"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.join("cumulants.csv").exists());
    assert!(dir.join("manifest.json").exists());
}
