//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::json;

use qssep_core::entanglement::{
    entropy_kernel, mutual_information_analytic_with, second_order_mutual_information, simulate_mutual_information,
};
use qssep_core::level_stats::{
    build_sector_chain, gl4_generators, histogram_rows, poisson_levels, remove_degeneracies, sector_label,
    spacing_statistics, ChainConstruction, CSector, EigenvalueRow, LevelSummaryRow, WeightSector, R_TILDE_POISSON,
};
use qssep_core::nc_combinatorics::{bell, catalan};
use qssep_core::qssep_sim::{
    estimate_loop, evolve_with, mean_density_profile, BoundaryParams, CoherenceMatrix, InitialProfile, Mode,
    Observable, Observer, Propagator, SampleTable, SimConfig, DEFAULT_MAX_LOOP_ORDER,
};
use qssep_core::spectra::{
    qssep_subblock_density, semicircle_density, DiagonalProfile, LocalFreeCumulantSpec, SolverOptions,
    SpectralProblem, StieltjesOptions,
};
use qssep_core::ssep_reference::{build_ssep_generator, mu_curve, ssep_cumulants, CumulantRow};
use qssep_core::steady_state::{
    domain_wall, g_closed_form, g_steady, rescale_reservoirs, solve_g2_dynamics, G2Problem,
};

use crate::output::{CliError, CliResult, OutputDir};
use crate::params::*;
use crate::{Cli, Command, DEFAULT_OUT};

const SERIES_HEADER: [&str; 4] = ["t_macro", "observable", "value", "stderr"];

/// Top-level keys of the TOML file besides the subcommand sections.
const GLOBAL_KEYS: [&str; 3] = ["seed", "threads", "out"];
const SECTIONS: [&str; 7] = ["simulate", "loops", "g2-dynamics", "spectrum", "entanglement", "ssep", "levelstats"];

pub fn run(cli: Cli) -> CliResult<()> {
    let file = cli.config.as_deref().map(load_config).transpose()?;
    let file_int = |key: &str| -> CliResult<Option<i64>> {
        match file.as_ref().and_then(|t| t.get(key)) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v)),
            Some(v) => Err(CliError::Usage(format!("config key `{key}` must be a non-negative integer, got {v}"))),
        }
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file_int("seed")?.unwrap_or(0) as u64,
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => file_int("threads")?.map(|t| t as usize),
    };
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    let out_path = match (&cli.out, file.as_ref().and_then(|t| t.get("out"))) {
        (Some(p), _) => p.clone(),
        (None, Some(toml::Value::String(s))) => PathBuf::from(s),
        (None, Some(v)) => return Err(CliError::Usage(format!("config key `out` must be a string, got {v}"))),
        (None, None) => PathBuf::from(DEFAULT_OUT),
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    let file = file.as_ref();
    let ctx = Ctx { seed, threads, out_path };
    match &cli.command {
        Command::Simulate(a) => ctx.dispatch(a, file, simulate),
        Command::Loops(a) => ctx.dispatch(a, file, loops),
        Command::G2Dynamics(a) => ctx.dispatch(a, file, g2_dynamics),
        Command::Spectrum(a) => ctx.dispatch(a, file, spectrum),
        Command::Entanglement(a) => ctx.dispatch(a, file, entanglement),
        Command::Ssep(a) => ctx.dispatch(a, file, ssep),
        Command::Levelstats(a) => ctx.dispatch(a, file, levelstats),
        Command::Selftest => {
            let mut out = OutputDir::create(&ctx.out_path)?;
            let failed = selftest(&mut out)?;
            let summary = json!({ "failed": failed });
            out.finish("selftest", &ctx.echo(None), seed, threads, summary)?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::SelfTest(failed.join(", ")))
            }
        }
    }
}

fn load_config(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for key in table.keys() {
        if !GLOBAL_KEYS.contains(&key.as_str()) && !SECTIONS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("{}: unknown key `{key}`", path.display())));
        }
    }
    Ok(table)
}

struct Ctx {
    seed: u64,
    threads: Option<usize>,
    out_path: PathBuf,
}

impl Ctx {
    fn dispatch<P: Params>(
        &self,
        args: &P,
        file: Option<&toml::Table>,
        body: fn(&P, u64, &mut OutputDir) -> CliResult<serde_json::Value>,
    ) -> CliResult<()> {
        let p = resolve(args, file)?;
        let section = toml::Value::try_from(&p).map_err(|e| CliError::Usage(format!("cannot echo parameters: {e}")))?;
        let mut out = OutputDir::create(&self.out_path)?;
        let summary = body(&p, self.seed, &mut out)?;
        out.finish(P::NAME, &self.echo(Some((P::NAME, section))), self.seed, self.threads, summary)
    }

    /// The resolved configuration in the same layout `--config` accepts.
    fn echo(&self, section: Option<(&str, toml::Value)>) -> toml::Table {
        let mut t = toml::Table::new();
        t.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        if let Some(n) = self.threads {
            t.insert("threads".into(), toml::Value::Integer(n as i64));
        }
        if let Some((name, v)) = section {
            t.insert(name.into(), v);
        }
        t
    }
}

#[derive(Serialize)]
struct SeriesRow {
    t_macro: f64,
    observable: String,
    value: f64,
    stderr: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect(),
    }
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn boundary(b: &BoundaryArgs) -> CliResult<BoundaryParams> {
    let rates = [b.alpha1, b.beta1, b.alphan, b.betan];
    if rates.iter().any(Option::is_some) {
        if b.na.is_some() || b.nb.is_some() {
            return usage("give either reservoir densities or rates, not both");
        }
        match rates {
            [Some(a1), Some(b1), Some(an), Some(bn)] => Ok(BoundaryParams::new(a1, b1, an, bn)?),
            _ => usage("--alpha1, --beta1, --alphan and --betan must be given together"),
        }
    } else {
        Ok(BoundaryParams::from_densities(b.na.unwrap(), b.nb.unwrap())?)
    }
}

fn propagator(p: PropagatorArg) -> Propagator {
    match p {
        PropagatorArg::Exact => Propagator::Exact,
        PropagatorArg::BondSplit => Propagator::BondSplit,
    }
}

fn initial(i: InitialArg, rho: f64) -> InitialProfile {
    match i {
        InitialArg::DomainWall => InitialProfile::DomainWall,
        InitialArg::Flat => InitialProfile::Flat { rho },
        InitialArg::Empty => InitialProfile::Empty,
        InitialArg::Stationary => InitialProfile::Stationary,
    }
}

/// Lattice coordinate of the 0-based site i: (i + 1)/(N + 1).
fn lattice_x(i: usize, n: usize) -> f64 {
    (i + 1) as f64 / (n + 1) as f64
}

/// Site index (0-based) closest to macroscopic position x.
fn site_of(x: f64, n: usize) -> CliResult<usize> {
    if !(x > 0.0 && x < 1.0) {
        return usage(format!("position {x} outside (0, 1)"));
    }
    Ok(((x * (n + 1) as f64).round() as usize).clamp(1, n) - 1)
}

// ---------- simulate ----------

struct DensityRecorder(Vec<(f64, Vec<f64>)>);

impl Observer for DensityRecorder {
    fn observe(&mut self, _: usize, _: usize, t_macro: f64, g: &CoherenceMatrix) {
        self.0.push((t_macro, g.diagonal()));
    }
}

fn simulate(p: &SimulateParams, seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let b = boundary(&p.boundary)?;
    let n = p.n.unwrap();
    let records = p.records.unwrap();
    if records == 0 {
        return usage("--records must be positive");
    }
    let mut cfg = SimConfig::new(n);
    cfg.dt = p.dt.unwrap();
    cfg.mode = match p.mode.unwrap() {
        ModeArg::Open => Mode::Open,
        ModeArg::Closed => Mode::Closed,
    };
    cfg.initial = initial(p.initial.unwrap(), p.rho.unwrap());
    cfg.seed = seed;
    cfg.n_trajectories = p.trajectories.unwrap();
    cfg.propagator = propagator(p.propagator.unwrap());
    cfg.record_times = (1..=records).map(|k| p.t_max.unwrap() * k as f64 / records as f64).collect();
    let runs = evolve_with(&cfg, &b, |_| DensityRecorder(Vec::new()))?;

    let mut rows = Vec::with_capacity(records * n);
    for k in 0..records {
        let t = runs[0].0[k].0;
        for j in 0..n {
            let xs: Vec<f64> = runs.iter().map(|r| r.0[k].1[j]).collect();
            let (value, stderr) = mean_stderr(&xs);
            rows.push(SeriesRow { t_macro: t, observable: format!("n_{}", j + 1), value, stderr });
        }
    }
    out.write_csv("density.csv", &SERIES_HEADER, &rows)?;

    #[derive(Serialize)]
    struct ProfileRow {
        site: usize,
        x: f64,
        density: f64,
    }
    let profile = mean_density_profile(&b, n)?;
    let prof_rows: Vec<ProfileRow> = profile
        .iter()
        .enumerate()
        .map(|(j, &d)| ProfileRow { site: j + 1, x: lattice_x(j, n), density: d })
        .collect();
    out.write_csv("steady_profile.csv", &["site", "x", "density"], &prof_rows)?;

    let last = &rows[(records - 1) * n..];
    let max_z = last
        .iter()
        .zip(&profile)
        .map(|(r, e)| (r.value - e).abs() / r.stderr)
        .filter(|z| z.is_finite())
        .fold(0.0, f64::max);
    Ok(json!({
        "final_t_macro": last[0].t_macro,
        "max_z_vs_steady_profile_at_final_time": max_z,
    }))
}

// ---------- loops ----------

fn loops(p: &LoopsParams, seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let n = p.n.unwrap();
    let xs = p.xs.as_ref().unwrap();
    if xs.is_empty() || xs.len() > DEFAULT_MAX_LOOP_ORDER {
        return usage(format!("--xs needs between 1 and {DEFAULT_MAX_LOOP_ORDER} positions"));
    }
    let sites = xs.iter().map(|&x| site_of(x, n)).collect::<CliResult<Vec<_>>>()?;
    let mut sorted = sites.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != sites.len() {
        return usage(format!("positions {xs:?} map to repeated sites on {n} sites"));
    }
    let (t_burn, t_max, samples) = (p.t_burn.unwrap(), p.t_max.unwrap(), p.samples.unwrap());
    if samples == 0 || !(t_burn > 0.0) || t_burn > t_max {
        return usage("need samples ≥ 1 and 0 < t_burn ≤ t_max");
    }
    let b = BoundaryParams::from_densities(p.na.unwrap(), p.nb.unwrap())?;
    let mut cfg = SimConfig::new(n);
    cfg.dt = p.dt.unwrap();
    cfg.initial = InitialProfile::Stationary;
    cfg.seed = seed;
    cfg.n_trajectories = p.trajectories.unwrap();
    cfg.propagator = propagator(p.propagator.unwrap());
    cfg.record_times = if samples == 1 { vec![t_max] } else { linspace(t_burn, t_max, samples) };
    let obs = Observable::closed_loop(&sites);
    let label = obs.label.clone();
    let tables = evolve_with(&cfg, &b, |_| SampleTable::new(vec![obs.clone()]))?;
    let table = SampleTable::concat(tables)?;
    let est = estimate_loop(&table, 0, true, DEFAULT_MAX_LOOP_ORDER)?;
    let order = sites.len();
    let scale = (n as f64).powi(order as i32 - 1);
    let positions: Vec<f64> = sites.iter().map(|&i| lattice_x(i, n)).collect();
    let analytic = rescale_reservoirs(p.na.unwrap(), p.nb.unwrap())?.eval(order, &positions)?;
    let value = scale * est.connected.re;
    let stderr = scale * est.stderr_connected;
    let rows = [
        SeriesRow { t_macro: t_max, observable: format!("sim:{label}"), value, stderr },
        SeriesRow { t_macro: t_max, observable: format!("analytic:{label}"), value: analytic, stderr: 0.0 },
    ];
    out.write_csv("loops.csv", &SERIES_HEADER, &rows)?;
    Ok(json!({
        "order": order,
        "positions": positions,
        "simulated": value,
        "stderr": stderr,
        "analytic": analytic,
        "imaginary_part": scale * est.connected.im,
        "z": (value - analytic) / stderr,
        "samples": est.n_samples,
    }))
}

// ---------- g2-dynamics ----------

fn g2_dynamics(p: &G2Params, seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let (xs, ys) = (p.xs.as_ref().unwrap(), p.ys.as_ref().unwrap());
    if xs.len() != ys.len() || xs.is_empty() {
        return usage("--xs and --ys must be non-empty and of equal length");
    }
    let times = p.times.as_ref().unwrap();
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return usage("--times must be non-empty and increasing");
    }
    let (na, nb) = (p.na.unwrap(), p.nb.unwrap());
    let problem = G2Problem { n_a: na, n_b: nb, m: p.grid.unwrap(), g1_init: domain_wall, g2_init: None, dt: None };
    let fields = solve_g2_dynamics(&problem, times)?;
    let mut rows = Vec::new();
    for (f, &t) in fields.iter().zip(times) {
        for (&x, &y) in xs.iter().zip(ys) {
            rows.push(SeriesRow { t_macro: t, observable: format!("pde:g2({x},{y})"), value: f.interpolate(x, y), stderr: 0.0 });
        }
    }
    let mc_n = p.mc_n.unwrap();
    let mut worst_z: Option<f64> = None;
    if mc_n > 0 {
        let b = BoundaryParams::from_densities(na, nb)?;
        let mut cfg = SimConfig::new(mc_n);
        cfg.dt = p.dt.unwrap();
        cfg.initial = InitialProfile::DomainWall;
        cfg.seed = seed;
        cfg.n_trajectories = p.trajectories.unwrap();
        cfg.propagator = propagator(p.propagator.unwrap());
        cfg.record_times = times.clone();
        let mut observables = Vec::new();
        for (&x, &y) in xs.iter().zip(ys) {
            let (i, j) = (site_of(x, mc_n)?, site_of(y, mc_n)?);
            if i == j {
                return usage(format!("({x}, {y}) falls on a single site for N = {mc_n}"));
            }
            observables.push(Observable::closed_loop(&[i, j]));
        }
        let tables = evolve_with(&cfg, &b, |_| SampleTable::new(observables.clone()))?;
        let table = SampleTable::concat(tables)?;
        let scale = mc_n as f64;
        let mut z: f64 = 0.0;
        for (k, f) in fields.iter().enumerate() {
            let slice = table.at_time_index(k);
            let t = slice.rows.first().map(|r| r.t_macro).unwrap_or(f.t);
            for (o, (&x, &y)) in xs.iter().zip(ys).enumerate() {
                let est = estimate_loop(&slice, o, true, DEFAULT_MAX_LOOP_ORDER)?;
                let (v, e) = (scale * est.connected.re, scale * est.stderr_connected);
                z = z.max((v - f.interpolate(x, y)).abs() / e);
                rows.push(SeriesRow { t_macro: t, observable: format!("mc:g2({x},{y})"), value: v, stderr: e });
            }
        }
        worst_z = Some(z);
    }
    out.write_csv("g2_dynamics.csv", &SERIES_HEADER, &rows)?;
    Ok(json!({
        "pde_grid": p.grid,
        "max_asymmetry": fields.iter().map(|f| f.max_abs_asymmetry()).fold(0.0, f64::max),
        "mc_max_z": worst_z,
    }))
}

// ---------- spectrum ----------

fn marchenko_pastur(rate: f64, x: f64) -> f64 {
    let (a, b) = ((1.0 - rate.sqrt()).powi(2), (1.0 + rate.sqrt()).powi(2));
    if x <= a || x >= b || x <= 0.0 {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * x)
}

fn spectrum(p: &SpectrumParams, _seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let grid = p.grid.unwrap();
    let (lo, hi) = (p.lo.unwrap(), p.hi.unwrap());
    if grid < 2 || !(lo < hi) {
        return usage("need --grid ≥ 2 and --lo < --hi");
    }
    let lambdas = linspace(lo, hi, grid);
    let (spec, profile, subblock, reference): (_, _, _, Box<dyn Fn(f64) -> f64>) = match p.spec.unwrap() {
        SpecArg::Wigner => {
            let s = p.s.unwrap();
            (LocalFreeCumulantSpec::wigner(s), DiagonalProfile::constant(1.0), false, Box::new(move |l| semicircle_density(s, l)))
        }
        SpecArg::FreePoisson => {
            let r = p.rate.unwrap();
            if !(r > 0.0) {
                return usage("--rate must be positive");
            }
            let spec = LocalFreeCumulantSpec::haar(vec![r; 8], Some(Arc::new(move |w: C64| r / (1.0 - w))));
            (spec, DiagonalProfile::constant(1.0), false, Box::new(move |l| marchenko_pastur(r, l)))
        }
        SpecArg::Qssep => {
            let (na, nb, c) = (p.na.unwrap(), p.nb.unwrap(), p.c.unwrap());
            let delta = nb - na;
            if delta == 0.0 {
                return usage("the QSSEP spectrum needs n_a ≠ n_b");
            }
            let spec = LocalFreeCumulantSpec::qssep(na, nb, p.truncation)?;
            let exact = p.truncation.is_none();
            let reference = move |l: f64| {
                if exact {
                    qssep_subblock_density(c, (l - na) / delta).unwrap_or(f64::NAN) / delta.abs()
                } else {
                    f64::NAN
                }
            };
            (spec, DiagonalProfile::indicator(c, 1.0)?, true, Box::new(reference))
        }
    };
    let problem = SpectralProblem::new(spec, profile, SolverOptions::default())?;
    let m = problem.stieltjes(&lambdas, &StieltjesOptions::default(), subblock)?;

    #[derive(Serialize)]
    struct Row {
        lambda: f64,
        density: f64,
        reference: f64,
    }
    let rows: Vec<Row> = m
        .lambdas
        .iter()
        .zip(&m.density)
        .map(|(&l, &d)| Row { lambda: l, density: d, reference: reference(l) })
        .collect();
    out.write_csv("spectrum.csv", &["lambda", "density", "reference"], &rows)?;
    out.write_csv("atoms.csv", &["lambda", "mass"], &m.atoms)?;
    let l1 = if rows.iter().all(|r| r.reference.is_finite()) { Some(m.l1_distance(&reference)) } else { None };
    Ok(json!({
        "l1_distance": l1,
        "total_mass": m.total_mass(),
        "continuum_mass": m.continuum_mass,
        "support": m.support,
        "atoms": m.atoms,
        "negative_flagged": m.negative_flagged,
    }))
}

// ---------- entanglement ----------

fn entanglement(p: &EntanglementParams, seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let (cs, qs) = (p.cs.as_ref().unwrap(), p.qs.as_ref().unwrap());
    let (na, nb) = (p.na.unwrap(), p.nb.unwrap());

    #[derive(Serialize)]
    struct AnalyticRow {
        c: f64,
        q: f64,
        i_value: f64,
        i_second_order: f64,
    }
    let mut analytic = Vec::new();
    for &c in cs {
        for &q in qs {
            analytic.push(AnalyticRow {
                c,
                q,
                i_value: mutual_information_analytic_with(c, q, na, nb)?,
                i_second_order: second_order_mutual_information(c, q, na, nb)?,
            });
        }
    }
    out.write_csv("mutual_info_analytic.csv", &["c", "q", "i_value", "i_second_order"], &analytic)?;
    if !p.simulate.unwrap() {
        return Ok(json!({ "simulated": false }));
    }

    let records = p.records.unwrap();
    if records == 0 {
        return usage("--records must be positive");
    }
    let b = BoundaryParams::from_densities(na, nb)?;
    let mut cfg = SimConfig::new(p.n.unwrap());
    cfg.dt = p.dt.unwrap();
    cfg.initial = initial(p.initial.unwrap(), 0.5);
    cfg.seed = seed;
    cfg.n_trajectories = p.trajectories.unwrap();
    cfg.propagator = propagator(p.propagator.unwrap());
    cfg.record_times = (1..=records).map(|k| p.t_max.unwrap() * k as f64 / records as f64).collect();
    let run = simulate_mutual_information(&cfg, &b, cs, qs, (p.window_lo.unwrap(), p.window_hi.unwrap()))?;
    out.write_csv("mutual_info.csv", &["t", "c", "q", "i_value", "stderr"], &run.series)?;

    #[derive(Serialize)]
    struct WindowRow {
        c: f64,
        q: f64,
        mean: f64,
        stderr: f64,
        samples: usize,
        window_lo: f64,
        window_hi: f64,
    }
    let windows: Vec<WindowRow> = run
        .averages
        .iter()
        .map(|a| WindowRow {
            c: a.c,
            q: a.q,
            mean: a.mean,
            stderr: a.stderr,
            samples: a.samples,
            window_lo: a.window.0,
            window_hi: a.window.1,
        })
        .collect();
    out.write_csv("mutual_info_window.csv", &["c", "q", "mean", "stderr", "samples", "window_lo", "window_hi"], &windows)?;
    let rel: Vec<f64> = run
        .averages
        .iter()
        .zip(analytic.iter())
        .map(|(a, e)| (a.mean - e.i_value) / e.i_value)
        .collect();
    Ok(json!({ "simulated": true, "onset": run.onset, "relative_error": rel }))
}

// ---------- ssep ----------

fn ssep(p: &SsepParams, _seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let (na, nb, n) = (p.na.unwrap(), p.nb.unwrap(), p.n.unwrap());
    let k = ssep_cumulants(na, nb, n, p.cumulants.unwrap())?;
    let rows: Vec<CumulantRow> = k
        .iter()
        .enumerate()
        .map(|(i, &v)| CumulantRow { order: i + 1, value: v, scaled: n as f64 * v })
        .collect();
    out.write_csv("cumulants.csv", &["order", "value", "scaled"], &rows)?;
    let lambdas = linspace(p.lambda_min.unwrap(), p.lambda_max.unwrap(), p.points.unwrap());
    let mu = mu_curve(&lambdas, na, nb, n)?;
    out.write_csv("mu.csv", &["lambda", "omega", "mu", "mu_infinite"], &mu)?;
    Ok(json!({ "cumulants": k, "mu_points": mu.len() }))
}

// ---------- levelstats ----------

fn levelstats(p: &LevelParams, _seed: u64, out: &mut OutputDir) -> CliResult<serde_json::Value> {
    let sector = match p.sector.unwrap() {
        SectorArg::Zero => CSector::Zero,
        SectorArg::PlusOne => CSector::PlusOne,
        SectorArg::MinusOne => CSector::MinusOne,
    };
    let ws = match (&p.counts, &p.cartan) {
        (Some(counts), None) => {
            let ws = WeightSector::from_counts(sector, counts)?;
            if p.n.is_some_and(|n| n != ws.n) {
                return usage(format!("--n disagrees with the {} sites implied by --counts", ws.n));
            }
            ws
        }
        (None, Some(c)) => {
            let (Some(n), [a, b, d]) = (p.n, c.as_slice()) else {
                return usage("--cartan takes three values and needs --n");
            };
            WeightSector::from_cartan(sector, n, [*a, *b, *d])?
        }
        _ => return usage("give exactly one of --counts and --cartan"),
    };
    let (g, kappa) = (p.g.unwrap(), p.kappa.unwrap());
    let op = build_sector_chain(&ws, g, kappa, ChainConstruction::Direct, p.budget.unwrap())?;
    let eigs = op.eigenvalues();
    let kept = remove_degeneracies(&eigs, p.tol.unwrap());
    let stats = spacing_statistics(&kept, p.unfold.unwrap())?;
    let label = sector_label(sector);
    let eig_rows: Vec<EigenvalueRow> = eigs
        .iter()
        .enumerate()
        .map(|(index, &eigenvalue)| EigenvalueRow { sector: label.into(), n: ws.n, kappa, g, index, eigenvalue })
        .collect();
    out.write_csv("eigenvalues.csv", &["sector", "n", "kappa", "g", "index", "eigenvalue"], &eig_rows)?;
    out.write_csv(
        "histograms.csv",
        &["kind", "center", "density", "reference_poisson", "reference_goe"],
        &histogram_rows(&stats),
    )?;
    let summary = LevelSummaryRow {
        sector: label.into(),
        n: ws.n,
        k: op.momentum(),
        weights: ws.weight.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" "),
        g,
        dim: op.dim(),
        n_eig: stats.n_eig,
        r_tilde_mean: stats.r_tilde_mean,
        r_tilde_err: stats.r_tilde_err,
    };
    out.write_csv(
        "summary.csv",
        &["sector", "n", "k", "weights", "g", "dim", "n_eig", "r_tilde_mean", "r_tilde_err"],
        std::slice::from_ref(&summary),
    )?;
    Ok(json!({
        "dim": summary.dim,
        "n_eig": summary.n_eig,
        "r_tilde_mean": summary.r_tilde_mean,
        "r_tilde_err": summary.r_tilde_err,
        "cartan": ws.cartan(),
        "hermiticity_defect": op.hermiticity_defect(),
    }))
}

// ---------- selftest ----------

type Check = (&'static str, fn() -> Result<(bool, String), qssep_core::Error>);

const CHECKS: [Check; 8] = [
    ("gl4_commutators", || {
        let b = gl4_generators();
        let (c, a) = (b.commutator_defect(), b.adjoint_defect());
        Ok((c == 0.0 && a == 0.0, format!("commutator defect {c:e}, adjoint defect {a:e}")))
    }),
    ("bell_catalan", || {
        Ok((bell(5) == 52 && catalan(5) == 42, format!("B5 = {}, C5 = {}", bell(5), catalan(5))))
    }),
    ("steady_closed_forms", || {
        let mut worst: f64 = 0.0;
        for n in 1..=4 {
            let xs: Vec<f64> = (0..n).map(|k| 0.13 + 0.21 * k as f64).collect();
            worst = worst.max((g_steady(n, &xs)? - g_closed_form(n, &xs)?).abs());
        }
        Ok((worst < 1e-12, format!("max deviation {worst:e}")))
    }),
    ("ssep_cumulants", || {
        let k = ssep_cumulants(1.0, 0.0, 1, 4)?;
        let expect = [1.0, 1.0 / 3.0, 1.0 / 15.0, -1.0 / 105.0];
        let worst = k.iter().zip(expect).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        Ok((worst < 1e-8, format!("max deviation {worst:e}")))
    }),
    ("wigner_l1", || {
        let p = SpectralProblem::new(LocalFreeCumulantSpec::wigner(1.0), DiagonalProfile::constant(1.0), SolverOptions::default())?;
        let m = p.stieltjes(&linspace(-2.2, 2.2, 120), &StieltjesOptions::default(), false)?;
        let l1 = m.l1_distance(|l| semicircle_density(1.0, l));
        Ok((l1 < 1e-3, format!("L1 {l1:e}")))
    }),
    ("entropy_kernel", || {
        let v = entropy_kernel(1.0, 0.5, 0.5);
        let d = (v - std::f64::consts::LN_2).abs();
        Ok((d < 1e-15, format!("|S(1/2) - ln 2| = {d:e}")))
    }),
    ("density_vs_ssep_generator", || {
        let b = BoundaryParams::new(0.7, 0.6, 0.2, 1.5)?;
        let g = build_ssep_generator(5, b)?;
        let p = g.stationary()?;
        let exact = mean_density_profile(&b, 5)?;
        let worst = g.density(&p).iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        Ok((worst < 1e-12, format!("max deviation {worst:e}")))
    }),
    ("poisson_r_tilde", || {
        let s = spacing_statistics(&poisson_levels(4000, 7), false)?;
        let d = (s.r_tilde_mean - R_TILDE_POISSON).abs();
        Ok((d < 0.02, format!("<r> = {:.4}", s.r_tilde_mean)))
    }),
];

/// Runs every check, writes `selftest.csv` and returns the names of failed checks.
fn selftest(out: &mut OutputDir) -> CliResult<Vec<String>> {
    #[derive(Serialize)]
    struct Row {
        check: &'static str,
        passed: bool,
        detail: String,
    }
    let rows: Vec<Row> = CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => Row { check: name, passed, detail },
            Err(e) => Row { check: name, passed: false, detail: e.to_string() },
        })
        .collect();
    out.write_csv("selftest.csv", &["check", "passed", "detail"], &rows)?;
    Ok(rows.iter().filter(|r| !r.passed).map(|r| r.check.to_string()).collect())
}
