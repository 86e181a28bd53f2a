//! Acceptance run: one line per criterion with its tolerance and runtime.
//!
//! `cargo test -p qssep-core --test acceptance [name ...]` runs the criteria whose
//! names contain one of the given substrings (all of them by default). Exits
//! nonzero when a gating criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qssep_core::entanglement::{
    domain_wall_at, fit_sqrt_growth, mutual_information_analytic_with, second_order_mutual_information,
    simulate_mutual_information,
};
use qssep_core::level_stats::{
    build_sector_chain, gl4_generators, goe_eigenvalues, ks_test, poisson_levels, remove_degeneracies,
    spacing_statistics, CSector, ChainConstruction, WeightSector, DEFAULT_DEGENERACY_TOL, DEFAULT_DENSE_BUDGET,
    R_TILDE_GOE, R_TILDE_POISSON,
};
use qssep_core::nc_combinatorics::{
    bell, catalan, classical_cumulants_from_moments, free_cumulants_from_moments, kreweras,
    moments_from_classical_cumulants, moments_from_free_cumulants, NCPartition, Poly,
};
use qssep_core::qssep_sim::{
    estimate_loop, evolve_with, heat_step, mean_density_profile, simulate_local_process, BoundaryParams,
    CoherenceMatrix, InitialProfile, LocalProcessConfig, Observable, Observer, Propagator, SampleTable, SimConfig,
    DEFAULT_MAX_LOOP_ORDER,
};
use qssep_core::spectra::{
    moment_oracle_nc, qssep_block_cdf, qssep_subblock_density, semicircle_density, z_left, DiagonalProfile,
    LocalFreeCumulantSpec, QssepBlock, SolverOptions, SpectralProblem, StieltjesOptions,
};
use qssep_core::ssep_reference::{build_ssep_generator, gallavotti_cohen_partner, mu_ssep, mu_ssep_infinite, ssep_cumulants};
use qssep_core::steady_state::{
    domain_wall, g_closed_form, g_steady, rescale_reservoirs, solve_g2_dynamics, w_functional, G2Problem,
};
use qssep_core::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

struct Criterion {
    name: &'static str,
    tolerance: &'static str,
    gating: bool,
    run: fn() -> Result<Outcome>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Lattice coordinate of the 0-based site i.
fn lattice_x(i: usize, n: usize) -> f64 {
    (i + 1) as f64 / (n + 1) as f64
}

fn site_of(x: f64, n: usize) -> usize {
    ((x * (n + 1) as f64).round() as usize).clamp(1, n) - 1
}

struct Diagonal(Vec<f64>);

impl Observer for Diagonal {
    fn observe(&mut self, _: usize, _: usize, _: f64, g: &CoherenceMatrix) {
        self.0 = g.diagonal();
    }
}

fn mean_density() -> Result<Outcome> {
    let b = BoundaryParams::new(0.8, 0.3, 0.2, 0.9)?;
    let mut worst_gen: f64 = 0.0;
    for n in 2..=6 {
        let g = build_ssep_generator(n, b)?;
        let p = g.stationary()?;
        let exact = mean_density_profile(&b, n)?;
        for (a, e) in g.density(&p).iter().zip(&exact) {
            worst_gen = worst_gen.max((a - e).abs());
        }
    }
    let n = 40;
    let mut cfg = SimConfig::new(n);
    cfg.dt = 0.1;
    cfg.initial = InitialProfile::Stationary;
    cfg.seed = 11;
    cfg.n_trajectories = 2000;
    cfg.propagator = Propagator::BondSplit;
    cfg.record_times = vec![0.1];
    let runs = evolve_with(&cfg, &b, |_| Diagonal(Vec::new()))?;
    let exact = mean_density_profile(&b, n)?;
    let mut max_z: f64 = 0.0;
    for (j, e) in exact.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
        let (m, se) = mean_stderr(&xs);
        max_z = max_z.max((m - e).abs() / se);
    }
    outcome(
        worst_gen < 1e-12 && max_z < 4.0,
        format!("generator null space max dev {worst_gen:.1e} (2 ≤ N ≤ 6); N=40 x2000 max |z| {max_z:.2}"),
    )
}

fn g2_steady() -> Result<Outcome> {
    let n = 40;
    let pairs = [(4, 12), (4, 30), (8, 20), (10, 35), (12, 16), (15, 25), (19, 20), (20, 33), (25, 30), (30, 37)];
    let b = BoundaryParams::from_densities(1.0, 0.0)?;
    let mut cfg = SimConfig::new(n);
    cfg.dt = 0.1;
    cfg.initial = InitialProfile::Stationary;
    cfg.seed = 12;
    cfg.n_trajectories = 40;
    cfg.propagator = Propagator::BondSplit;
    cfg.record_times = linspace(0.5, 2.0, 60);
    let observables: Vec<Observable> = pairs.iter().map(|&(i, j)| Observable::closed_loop(&[i, j])).collect();
    let tables = evolve_with(&cfg, &b, |_| SampleTable::new(observables.clone()))?;
    let table = SampleTable::concat(tables)?;
    let g = rescale_reservoirs(1.0, 0.0)?;
    let mut max_z: f64 = 0.0;
    for (o, &(i, j)) in pairs.iter().enumerate() {
        let est = estimate_loop(&table, o, true, DEFAULT_MAX_LOOP_ORDER)?;
        let expected = g.eval(2, &[lattice_x(i, n), lattice_x(j, n)])?;
        let z = (n as f64 * est.connected.re - expected) / (n as f64 * est.stderr_connected);
        max_z = max_z.max(z.abs());
    }
    outcome(max_z < 5.0, format!("10 pairs, max |z| {max_z:.2}"))
}

fn g2_dynamics() -> Result<Outcome> {
    let n = 100;
    let times = [0.02, 0.05, 0.1];
    let xy = [(0.3, 0.6), (0.4, 0.6), (0.45, 0.55), (0.2, 0.7)];
    let sites: Vec<(usize, usize)> = xy.iter().map(|&(x, y)| (site_of(x, n), site_of(y, n))).collect();
    let problem = |m| G2Problem { n_a: 1.0, n_b: 0.0, m, g1_init: domain_wall, g2_init: None, dt: None };
    let fine = solve_g2_dynamics(&problem(400), &times)?;
    let coarse = solve_g2_dynamics(&problem(200), &times)?;
    let b = BoundaryParams::from_densities(1.0, 0.0)?;
    let mut cfg = SimConfig::new(n);
    cfg.dt = 0.1;
    cfg.initial = InitialProfile::DomainWall;
    cfg.seed = 13;
    cfg.n_trajectories = 200;
    cfg.propagator = Propagator::BondSplit;
    cfg.record_times = times.to_vec();
    let observables: Vec<Observable> = sites.iter().map(|&(i, j)| Observable::closed_loop(&[i, j])).collect();
    let tables = evolve_with(&cfg, &b, |_| SampleTable::new(observables.clone()))?;
    let table = SampleTable::concat(tables)?;
    let (mut max_z, mut max_pde_err, mut min_se): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for k in 0..times.len() {
        let slice = table.at_time_index(k);
        for (o, &(i, j)) in sites.iter().enumerate() {
            let (x, y) = (lattice_x(i, n), lattice_x(j, n));
            let est = estimate_loop(&slice, o, true, DEFAULT_MAX_LOOP_ORDER)?;
            let pde = fine[k].interpolate(x, y);
            let pde_err = (pde - coarse[k].interpolate(x, y)).abs();
            let se = n as f64 * est.stderr_connected;
            let sigma = se.hypot(pde_err);
            max_pde_err = max_pde_err.max(pde_err);
            min_se = min_se.min(se);
            max_z = max_z.max((n as f64 * est.connected.re - pde).abs() / sigma);
        }
    }
    outcome(max_z < 3.5, format!("4 pairs x 3 times, N=100 x200, max |z| {max_z:.2}; MC se ≥ {min_se:.3}, PDE grid error ≤ {max_pde_err:.1e}"))
}

fn combinatorics() -> Result<Outcome> {
    let m: Vec<Poly> = (0..6).map(Poly::var).collect();
    let (m1, m2, m3, m4) = (m[0].clone(), m[1].clone(), m[2].clone(), m[3].clone());
    let kappa = free_cumulants_from_moments(&m)?;
    let c = classical_cumulants_from_moments(&m)?;
    let kappa4 = m4.clone() - Poly::int(4) * m1.clone() * m3.clone() - Poly::int(2) * m2.pow(2)
        + Poly::int(10) * m1.pow(2) * m2.clone()
        - Poly::int(5) * m1.pow(4);
    let c4 = m4 - Poly::int(4) * m1.clone() * m3 - Poly::int(3) * m2.pow(2) + Poly::int(12) * m1.pow(2) * m2
        - Poly::int(6) * m1.pow(4);
    let symbolic = kappa[3] == kappa4 && c[3] == c4;
    let round_trip =
        moments_from_free_cumulants(&kappa)? == m && moments_from_classical_cumulants(&c)? == m;
    let pi = NCPartition::from_blocks(6, &[vec![1, 3], vec![2], vec![4, 5], vec![6]])?;
    let expected = NCPartition::from_blocks(6, &[vec![1, 2], vec![3, 5, 6], vec![4]])?;
    let k = kreweras(&pi);
    let numbers = bell(5) == 52 && catalan(5) == 42;
    outcome(
        numbers && symbolic && round_trip && k == expected,
        format!(
            "B5={} C5={}, kappa4/c4 symbolic {symbolic}, round trips n≤6 {round_trip}, K(pi)={k}",
            bell(5),
            catalan(5)
        ),
    )
}

fn closed_forms() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        for n in 1..=4 {
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            worst = worst.max((g_steady(n, &xs)? - g_closed_form(n, &xs)?).abs());
        }
    }
    outcome(worst < 1e-12, format!("1000 points, n=1..4, max dev {worst:.1e}"))
}

fn free_poisson_g(rate: f64, z: C64) -> C64 {
    let b = z + 1.0 - rate;
    let d = (b * b - 4.0 * z).sqrt();
    let roots = [(b - d) / (2.0 * z), (b + d) / (2.0 * z)];
    *roots.iter().find(|g| g.im * z.im < 0.0).expect("one root in the opposite half plane")
}

fn spectral_oracles() -> Result<Outcome> {
    let one = DiagonalProfile::constant(1.0);
    let w = SpectralProblem::new(LocalFreeCumulantSpec::wigner(1.0), one.clone(), SolverOptions::default())?;
    let m = w.stieltjes(&linspace(-2.2, 2.2, 400), &StieltjesOptions::default(), false)?;
    let l1 = m.l1_distance(|l| semicircle_density(1.0, l));

    let rate = 2.0;
    let fp = LocalFreeCumulantSpec::haar(vec![rate; 8], Some(Arc::new(move |w: C64| rate / (1.0 - w))));
    let p = SpectralProblem::new(fp, one.clone(), SolverOptions::default())?;
    let mut res_dev: f64 = 0.0;
    for k in 0..20 {
        let t = k as f64 / 19.0;
        let z = C64::new(-1.0 + 7.0 * t, 0.1 + 1.9 * ((7 * k) % 20) as f64 / 19.0);
        res_dev = res_dev.max((p.resolvent(z)? - free_poisson_g(rate, z)).norm());
    }

    let specs = [
        (LocalFreeCumulantSpec::wigner(1.0), 0.0, 3.0),
        (LocalFreeCumulantSpec::haar(vec![2.0; 6], None), 3.0, 4.5),
        (LocalFreeCumulantSpec::qssep(0.0, 1.0, None)?, 0.5, 1.0),
    ];
    let mut mom_dev: f64 = 0.0;
    for h in [one, DiagonalProfile::indicator(0.3, 0.8)?] {
        for (spec, center, radius) in &specs {
            let p = SpectralProblem::new(spec.clone(), h.clone(), SolverOptions::default())?;
            let sm = p.moments(5, *center, *radius, 96)?;
            for n in 1..=5 {
                mom_dev = mom_dev.max((sm[n] - moment_oracle_nc(spec, &h, n)?).abs());
            }
        }
    }
    outcome(
        l1 < 1e-3 && res_dev < 1e-8 && mom_dev < 1e-6,
        format!("Wigner L1 {l1:.1e}; free Poisson resolvent dev {res_dev:.1e}; moments ≤5 dev {mom_dev:.1e}"),
    )
}

struct Block {
    lo: usize,
    eigs: Vec<f64>,
}

impl Observer for Block {
    fn observe(&mut self, _: usize, _: usize, _: f64, g: &CoherenceMatrix) {
        let hi = g.diagonal().len();
        self.eigs.extend(g.block_eigenvalues(self.lo, hi));
    }
}

fn subblock_spectrum() -> Result<Outcome> {
    let mut edge_dev: f64 = 0.0;
    let mut edge_ok = true;
    for c in [0.1f64, 0.25, 0.4, 0.5, 0.75, 0.9] {
        let z = c / (c + (1.0 - c) * (1.0 / c).exp());
        edge_dev = edge_dev.max((z_left(c) - z).abs());
        edge_ok &= qssep_subblock_density(c, z * 0.99)? == 0.0 && qssep_subblock_density(c, z * 1.01)? > 0.0;
    }
    let (n, c) = (100, 0.4);
    let lo = (c * n as f64).round() as usize;
    let b = BoundaryParams::from_densities(0.0, 1.0)?;
    let mut cfg = SimConfig::new(n);
    cfg.dt = 0.1;
    cfg.initial = InitialProfile::Stationary;
    cfg.seed = 17;
    cfg.n_trajectories = 4;
    cfg.propagator = Propagator::BondSplit;
    cfg.record_times = (0..16).map(|k| 0.3 + 0.02 * k as f64).collect();
    let runs = evolve_with(&cfg, &b, |_| Block { lo, eigs: Vec::new() })?;
    let sample: Vec<f64> = runs.into_iter().flat_map(|r| r.eigs).collect();
    let (d, _) = ks_test(&sample, |l| qssep_block_cdf(QssepBlock::Right(c), l).unwrap_or(f64::NAN));
    outcome(
        edge_dev < 1e-15 && edge_ok && d < 0.05,
        format!("z_l dev {edge_dev:.1e}, edge {edge_ok}; KS D {d:.4} over {} eigenvalues", sample.len()),
    )
}

fn mutual_information() -> Result<Outcome> {
    let cs = [0.2, 0.4, 0.6, 0.8];
    let b = BoundaryParams::from_densities(0.0, 1.0)?;
    let mut cfg = SimConfig::new(100);
    cfg.dt = 0.1;
    cfg.initial = InitialProfile::Stationary;
    cfg.seed = 19;
    cfg.n_trajectories = 4;
    cfg.propagator = Propagator::BondSplit;
    cfg.record_times = (1..=40).map(|k| 0.01 * k as f64).collect();
    let run = simulate_mutual_information(&cfg, &b, &cs, &[2.0], (0.15, 0.4))?;
    let mut max_rel: f64 = 0.0;
    for a in &run.averages {
        let exact = mutual_information_analytic_with(a.c, 2.0, 0.0, 1.0)?;
        max_rel = max_rel.max(((a.mean - exact) / exact).abs());
    }
    let mut equilibrium: f64 = 0.0;
    for c in cs {
        equilibrium = equilibrium
            .max(mutual_information_analytic_with(c, 2.0, 0.5, 0.5)?.abs())
            .max(second_order_mutual_information(c, 2.0, 0.5, 0.5)?.abs());
    }

    // early growth from a domain wall at the cut
    let times: Vec<f64> = (1..=120).map(|k| 0.0005 * k as f64).collect();
    let mut fits = Vec::new();
    for c in [0.3, 0.5, 0.7] {
        let mut ds = Vec::new();
        for seed in 0..8 {
            let mut cfg = SimConfig::new(100);
            cfg.dt = 0.1;
            cfg.initial = InitialProfile::Diagonal { values: domain_wall_at(100, c, 0.0, 1.0) };
            cfg.seed = 100 + seed;
            cfg.n_trajectories = 1;
            cfg.propagator = Propagator::BondSplit;
            cfg.record_times = times.clone();
            let run = simulate_mutual_information(&cfg, &b, &[c], &[2.0], (0.05, 0.06))?;
            let vs: Vec<f64> = run.series.iter().map(|r| r.i_value).collect();
            ds.push(fit_sqrt_growth(&times, &vs)?.d);
        }
        fits.push((c, mean_stderr(&ds)));
    }
    let d_all = fits.iter().map(|f| f.1 .0).sum::<f64>() / fits.len() as f64;
    let mut spread_ok = true;
    for (i, a) in fits.iter().enumerate() {
        for b in &fits[i + 1..] {
            spread_ok &= (a.1 .0 - b.1 .0).abs() <= 3.0 * a.1 .1.hypot(b.1 .1);
        }
    }
    let per_cut: Vec<String> = fits.iter().map(|(c, (d, e))| format!("{c}:{d:.3}±{e:.3}")).collect();
    outcome(
        max_rel < 0.05 && equilibrium < 1e-12 && (d_all - 0.8).abs() <= 0.15 && spread_ok,
        format!(
            "max rel err {max_rel:.3}; equilibrium {equilibrium:.1e}; D_I {d_all:.3} [{}], cut-independent {spread_ok}",
            per_cut.join(" ")
        ),
    )
}

fn ssep() -> Result<Outcome> {
    let expected = [1.0, 1.0 / 3.0, 1.0 / 15.0, -1.0 / 105.0];
    let mut worst: f64 = 0.0;
    for n in [1, 7, 50] {
        let k = ssep_cumulants(1.0, 0.0, n, 4)?;
        for (a, e) in k.iter().zip(expected) {
            worst = worst.max((n as f64 * a - e).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut gc: f64 = 0.0;
    for _ in 0..200 {
        let (na, nb) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        let lambda = rng.random_range(-2.0..2.0);
        let partner = gallavotti_cohen_partner(lambda, na, nb)?;
        let (a, b) = (mu_ssep(lambda, na, nb, 10)?, mu_ssep(partner, na, nb, 10)?);
        gc = gc.max((a - b).abs() / a.abs().max(1.0));
        let (a, b) = (mu_ssep_infinite(lambda, na, nb)?, mu_ssep_infinite(partner, na, nb)?);
        gc = gc.max((a - b).abs() / a.abs().max(1.0));
    }
    outcome(
        worst < 1e-9 && gc < 1e-10,
        format!("N·κ_1..4 max dev {worst:.1e} (N = 1, 7, 50); fluctuation relation max dev {gc:.1e}"),
    )
}

fn level_statistics() -> Result<Outcome> {
    let p = spacing_statistics(&poisson_levels(20000, 29), false)?.r_tilde_mean;
    // one matrix fluctuates by about ±0.013 between seeds, so ten are pooled
    let mut pooled = Vec::new();
    for seed in 0..10 {
        pooled.extend(spacing_statistics(&goe_eigenvalues(1000, 31 + seed), false)?.r_tilde);
    }
    let g = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let basis = gl4_generators();
    let exact = basis.commutator_defect() == 0.0 && basis.adjoint_defect() == 0.0;
    let ws = WeightSector::from_counts(CSector::PlusOne, &[1, 2, 3, 5])?;
    let op = build_sector_chain(&ws, 1.0, 1, ChainConstruction::Direct, DEFAULT_DENSE_BUDGET)?;
    let kept = remove_degeneracies(&op.eigenvalues(), DEFAULT_DEGENERACY_TOL);
    let s = spacing_statistics(&kept, true)?;
    outcome(
        (p - R_TILDE_POISSON).abs() <= 0.01
            && (g - R_TILDE_GOE).abs() <= 0.01
            && exact
            && s.n_eig.abs_diff(1077) <= 20
            && (s.r_tilde_mean - 0.3826).abs() <= 0.02,
        format!(
            "Poisson {p:.4}, GOE (10 x 1000) {g:.4}, gl(4) exact {exact}; c1 N=11 N_eig {} <r> {:.4} ± {:.4}",
            s.n_eig, s.r_tilde_mean, s.r_tilde_err
        ),
    )
}

fn c0_family() -> Result<Outcome> {
    let ws = WeightSector::from_cartan(CSector::Zero, 10, [5.0, 3.0, 3.0])?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (g, target) in [(0.5, 0.3817), (1.0, 0.3980), (2.0, 0.3950)] {
        let op = build_sector_chain(&ws, g, 1, ChainConstruction::Direct, DEFAULT_DENSE_BUDGET)?;
        let kept = remove_degeneracies(&op.eigenvalues(), DEFAULT_DEGENERACY_TOL);
        let s = spacing_statistics(&kept, true)?;
        pass &= (s.r_tilde_mean - target).abs() <= 0.02;
        parts.push(format!("g={g}: {:.4} (target {target})", s.r_tilde_mean));
    }
    outcome(pass, parts.join(", "))
}

fn substituted_properties() -> Result<Outcome> {
    // w[Q] for constant cumulants and rank-one Q sums to Σ κ_n sⁿ/n
    let kappa = [0.3, -0.2, 0.15, 0.05];
    let u = |x: f64| 0.5 + x * x;
    let g = |n: usize, _: &[f64]| kappa[n - 1];
    let q = |x: f64, y: f64| u(x) * u(y);
    let w = w_functional(&g, &q, 4, 10)?;
    let s: f64 = 0.25 + 1.0 / 3.0 + 0.2;
    let expected: f64 = (1..=4).map(|n| kappa[n - 1] / n as f64 * s.powi(n as i32)).sum();
    let w_dev = (w.value - expected).abs();

    // tr-cumulants of the local process on a coarse grid: the mean follows the
    // heat equation, the connected two-point function is positive between
    // neighbouring cells and small further apart
    let base = LocalProcessConfig {
        cells: 4,
        n_dim: 16,
        dt: 0.25 / 16.0,
        steps: 8,
        record_every: 8,
        seed: 0,
        n_a: 1.0,
        n_b: 0.0,
        noise_scale: 1.0,
        initial: |x| if x < 0.5 { 1.0 } else { 0.0 },
    };
    let runs = 400;
    let m = base.cells;
    let mut traces = vec![Vec::with_capacity(runs); m + 1];
    let (x, y, far) = (1usize, 2usize, 3usize);
    let (mut cxy, mut cfar) = (0.0, 0.0);
    for r in 0..runs {
        let mut cfg = base.clone();
        cfg.seed = 1000 + r as u64;
        let snaps = simulate_local_process(&cfg)?;
        let last = snaps.last().expect("at least one snapshot");
        for (k, t) in last.normalized_traces().iter().enumerate() {
            traces[k].push(t.re);
        }
        cxy += last.normalized_trace_product(x, y).re;
        cfar += last.normalized_trace_product(x, far).re;
    }
    let dx = 1.0 / m as f64;
    let mut profile: Vec<f64> =
        (0..=m).map(|k| if k == 0 { 1.0 } else if k == m { 0.0 } else { (base.initial)(k as f64 * dx) }).collect();
    for _ in 0..base.steps {
        profile = heat_step(&profile, base.dt, dx);
    }
    let (mut max_z, mut max_se): (f64, f64) = (0.0, 0.0);
    for k in 1..m {
        let (mean, se) = mean_stderr(&traces[k]);
        max_z = max_z.max((mean - profile[k]).abs() / se);
        max_se = max_se.max(se);
    }
    let avg = |k: usize| traces[k].iter().sum::<f64>() / runs as f64;
    let near = cxy / runs as f64 - avg(x) * avg(y);
    let distant = cfar / runs as f64 - avg(x) * avg(far);
    outcome(
        w_dev < 1e-13 && max_z < 4.0 && max_se < 0.01 && near > 0.1 && distant.abs() < 0.25 * near,
        format!(
            "w[Q] dev {w_dev:.1e}; heat equation max |z| {max_z:.2} (se ≤ {max_se:.3}); tr-cumulant near {near:.3} far {distant:.3}"
        ),
    )
}

const CRITERIA: [Criterion; 12] = [
    Criterion { name: "mean_density", tolerance: "4σ; 1e-12", gating: true, run: mean_density },
    Criterion { name: "g2_steady", tolerance: "5σ", gating: true, run: g2_steady },
    Criterion { name: "g2_dynamics", tolerance: "3.5σ combined", gating: true, run: g2_dynamics },
    Criterion { name: "combinatorics", tolerance: "exact", gating: true, run: combinatorics },
    Criterion { name: "closed_forms", tolerance: "1e-12", gating: true, run: closed_forms },
    Criterion { name: "spectral_oracles", tolerance: "1e-3; 1e-8; 1e-6", gating: true, run: spectral_oracles },
    Criterion { name: "subblock_spectrum", tolerance: "KS < 0.05", gating: true, run: subblock_spectrum },
    Criterion { name: "mutual_information", tolerance: "5% rel; D 0.8±0.15", gating: true, run: mutual_information },
    Criterion { name: "ssep_cumulants", tolerance: "1e-9; 1e-10", gating: true, run: ssep },
    Criterion { name: "level_statistics", tolerance: "±0.01; ±20; ±0.02", gating: true, run: level_statistics },
    Criterion { name: "c0_family", tolerance: "±0.02 (reported only)", gating: false, run: c0_family },
    Criterion { name: "substituted_properties", tolerance: "1e-13; 4σ", gating: true, run: substituted_properties },
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str()))) {
        let start = Instant::now();
        let (pass, detail) = match (c.run)() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        let tag = match (pass, c.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not gating)",
        };
        println!("{tag} {} [{}] {detail} ({secs:.1} s)", c.name, c.tolerance);
        if !pass && c.gating {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
