use proptest::prelude::*;
use qssep_core::entanglement::*;
use qssep_core::qssep_sim::*;
use qssep_core::spectra::*;
use qssep_core::Error;
use std::f64::consts::LN_2;

fn atom(x: f64) -> SpectralMeasure {
    SpectralMeasure {
        lambdas: vec![0.0, 1.0],
        density: vec![0.0, 0.0],
        support: vec![],
        atoms: vec![(x, 1.0)],
        continuum_mass: 0.0,
        min_raw_density: 0.0,
        negative_flagged: false,
    }
}

#[test]
fn half_filled_atom_has_log2_entropy() {
    let r = entropy_from_spectrum(&atom(0.5), (0.0, 1.0), 2.0).unwrap();
    assert!((r.value - LN_2).abs() < 1e-15);
    let r = entropy_from_spectrum(&atom(0.5), (0.0, 1.0), 1.0).unwrap();
    assert!((r.value - LN_2).abs() < 1e-15);
    let half = entropy_from_spectrum(&atom(0.5), (0.25, 0.75), 2.0).unwrap();
    assert!((half.value - 0.5 * LN_2).abs() < 1e-15);
}

#[test]
fn pure_occupations_have_zero_entropy() {
    for x in [0.0, 1.0] {
        for q in [0.0, 0.5, 1.0, 2.0, 3.0] {
            let r = entropy_from_spectrum(&atom(x), (0.0, 1.0), q).unwrap();
            assert_eq!(r.value, 0.0, "x={x} q={q}");
        }
    }
}

#[test]
fn von_neumann_is_bracketed_by_nearby_renyi() {
    let c = 0.4;
    let vn = qssep_block_entropy(QssepBlock::Right(c), 1.0, 0.0, 1.0).unwrap();
    let below = qssep_block_entropy(QssepBlock::Right(c), 1.0 - 1e-4, 0.0, 1.0).unwrap();
    let above = qssep_block_entropy(QssepBlock::Right(c), 1.0 + 1e-4, 0.0, 1.0).unwrap();
    assert!(below > vn && vn > above, "{below} {vn} {above}");
    assert!((below - above).abs() < 1e-4);
    let m = atom(0.3);
    let e = |q| entropy_from_spectrum(&m, (0.0, 1.0), q).unwrap().value;
    assert!(e(1.0 - 1e-4) > e(1.0) && e(1.0) > e(1.0 + 1e-4));
}

#[test]
fn support_outside_unit_interval_is_rejected() {
    let mut m = atom(1.2);
    assert!(matches!(
        entropy_from_spectrum(&m, (0.0, 1.0), 2.0),
        Err(Error::InvalidArgument(_))
    ));
    m.atoms = vec![];
    m.lambdas = vec![-0.1, 0.5];
    m.density = vec![0.5, 1.0];
    assert!(entropy_from_spectrum(&m, (0.0, 1.0), 2.0).is_err());
    assert!(entropy_from_spectrum(&atom(0.5), (0.0, 1.0), -1.0).is_err());
}

#[test]
fn renyi_entropies_decrease_with_q() {
    for b in [QssepBlock::Right(0.3), QssepBlock::Left(0.6), QssepBlock::Full] {
        let s: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 3.0]
            .iter()
            .map(|q| qssep_block_entropy(b, *q, 0.0, 1.0).unwrap())
            .collect();
        assert!((s[0] - b.length() * LN_2).abs() < 1e-3, "{b:?} s0 = {}", s[0]);
        for w in s.windows(2) {
            assert!(w[0] > w[1], "{b:?}: {s:?}");
        }
    }
}

#[test]
fn analytic_mutual_information_volume_law_and_symmetry() {
    for c in [0.2, 0.5, 0.8] {
        assert!(mutual_information_analytic(c, 2.0).unwrap() > 0.01);
    }
    for c in [0.15, 0.3, 0.45] {
        for q in [1.0, 2.0] {
            let a = mutual_information_analytic(c, q).unwrap();
            let b = mutual_information_analytic(1.0 - c, q).unwrap();
            assert!((a - b).abs() < 1e-10, "c={c} q={q}: {a} vs {b}");
        }
    }
    for q in [0.5, 1.0, 2.0, 3.0] {
        for c in [0.1, 0.5, 0.9] {
            assert!(mutual_information_analytic(c, q).unwrap() > 0.0);
        }
    }
}

#[test]
fn equilibrium_has_no_volume_law() {
    for n in [0.0, 0.3, 0.5] {
        for q in [1.0, 2.0] {
            let i = mutual_information_analytic_with(0.4, q, n, n).unwrap();
            assert!(i.abs() < 1e-14, "n={n} q={q}: {i}");
        }
    }
    assert_eq!(second_order_mutual_information(0.4, 2.0, 0.3, 0.3).unwrap(), 0.0);
}

#[test]
fn reservoir_exchange_and_particle_hole() {
    for c in [0.25, 0.6] {
        let canon = mutual_information_analytic(c, 2.0).unwrap();
        let swapped = mutual_information_analytic_with(c, 2.0, 1.0, 0.0).unwrap();
        assert!((canon - swapped).abs() < 1e-10);
        let g = mutual_information_analytic_with(c, 2.0, 0.2, 0.7).unwrap();
        let h = mutual_information_analytic_with(c, 2.0, 0.8, 0.3).unwrap();
        assert!((g - h).abs() < 1e-10);
        assert!(g > 0.0 && g < canon);
    }
}

#[test]
fn block_entropy_matches_solver_spectrum() {
    let c = 0.5;
    let p = SpectralProblem::new(
        LocalFreeCumulantSpec::qssep(0.0, 1.0, None).unwrap(),
        DiagonalProfile::indicator(c, 1.0).unwrap(),
        SolverOptions::default(),
    )
    .unwrap();
    let lambdas: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
    let m = p.stieltjes(&lambdas, &StieltjesOptions::default(), true).unwrap();
    let from_solver = entropy_from_spectrum(&m, (c, 1.0), 2.0).unwrap().value;
    let closed = qssep_block_entropy(QssepBlock::Right(c), 2.0, 0.0, 1.0).unwrap();
    assert!((from_solver - closed).abs() < 2e-3, "{from_solver} vs {closed}");
}

#[test]
fn second_order_curve_misses_higher_cumulants() {
    let full = mutual_information_analytic(0.5, 2.0).unwrap();
    let second = second_order_mutual_information(0.5, 2.0, 0.0, 1.0).unwrap();
    let gap = (full - second).abs() / full;
    println!("c=0.5: full {full:.6}, second order {second:.6}, gap {:.1}%", 100.0 * gap);
    assert!(gap > 0.10);
}

#[test]
fn second_order_scales_quadratically_at_small_bias() {
    let i1 = second_order_mutual_information(0.5, 2.0, 0.475, 0.525).unwrap();
    let i2 = second_order_mutual_information(0.5, 2.0, 0.45, 0.55).unwrap();
    let ratio = i2 / i1;
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn product_states_have_zero_mutual_information() {
    let n = 40;
    let g = CoherenceMatrix::from_diagonal(&domain_wall_at(n, 0.4, 0.0, 1.0));
    let i = mutual_information_snapshot(&g, 0.4, &[1.0, 2.0]).unwrap();
    assert_eq!(i, vec![0.0, 0.0]);
    let g = CoherenceMatrix::from_diagonal(&vec![0.3; n]);
    let i = mutual_information_snapshot(&g, 0.5, &[2.0]).unwrap();
    assert!(i[0].abs() < 1e-14);
}

#[test]
fn eigenvalues_beyond_tolerance_are_an_error() {
    assert!(eigenvalue_entropy(&[0.5, 1.0 + 5e-10], 2.0).is_ok());
    assert!(matches!(
        eigenvalue_entropy(&[0.5, 1.0 + 1e-6], 2.0),
        Err(Error::InvariantViolation(_))
    ));
    assert!(eigenvalue_entropy(&[-1e-6], 1.0).is_err());
}

#[test]
fn observer_and_stored_series_agree() {
    let b = BoundaryParams::from_densities(0.0, 1.0).unwrap();
    let mut cfg = SimConfig::new(24);
    cfg.dt = 0.1;
    cfg.propagator = Propagator::BondSplit;
    cfg.initial = InitialProfile::Stationary;
    cfg.record_times = vec![0.02, 0.04, 0.06];
    let trajs = evolve(&cfg, &b).unwrap();
    let snaps: Vec<(f64, &CoherenceMatrix)> = trajs[0]
        .times
        .iter()
        .copied()
        .zip(trajs[0].snapshots.iter())
        .collect();
    let stored = mutual_information_series(&snaps, &[0.5], &[2.0]).unwrap();
    let run = simulate_mutual_information(&cfg, &b, &[0.5], &[2.0], (0.0, 0.1)).unwrap();
    assert_eq!(stored.len(), 3);
    for (a, r) in stored.iter().zip(&run.series) {
        assert_eq!(a.t, r.t);
        assert_eq!(a.i_value, r.i_value);
        assert!(a.i_value > 0.0);
    }
    assert_eq!(run.averages.len(), 1);
}

#[test]
fn simulated_mutual_information_is_nonnegative_and_pooled() {
    let b = BoundaryParams::from_densities(0.0, 1.0).unwrap();
    let mut cfg = SimConfig::new(30);
    cfg.dt = 0.1;
    cfg.propagator = Propagator::BondSplit;
    cfg.initial = InitialProfile::Stationary;
    cfg.n_trajectories = 3;
    cfg.record_times = (1..=20).map(|k| 0.01 * k as f64).collect();
    let run = simulate_mutual_information(&cfg, &b, &[0.3, 0.5], &[1.0, 2.0], (0.05, 0.2)).unwrap();
    assert_eq!(run.series.len(), 20 * 4);
    for r in &run.series {
        assert!(r.i_value >= 0.0);
        assert!(r.stderr.is_finite());
    }
    for a in &run.averages {
        assert!(a.mean > 0.0 && a.stderr > 0.0 && a.stderr < a.mean);
        assert_eq!(a.samples, 3 * 16);
    }
}

#[test]
fn onset_detected_after_relaxation() {
    let b = BoundaryParams::from_densities(0.0, 1.0).unwrap();
    let mut cfg = SimConfig::new(40);
    cfg.dt = 0.1;
    cfg.propagator = Propagator::BondSplit;
    cfg.initial = InitialProfile::Empty;
    cfg.record_times = (1..=40).map(|k| 0.01 * k as f64).collect();
    let run = simulate_mutual_information(&cfg, &b, &[0.5], &[2.0], (0.01, 0.4)).unwrap();
    let onset = run.onset.expect("profile relaxes by t = 0.4");
    assert!(onset > 0.02 && onset < 0.4, "onset {onset}");
    assert_eq!(run.averages[0].window.0, onset);
}

#[test]
fn window_without_samples_is_an_error() {
    let b = BoundaryParams::from_densities(0.0, 1.0).unwrap();
    let mut cfg = SimConfig::new(10);
    cfg.record_times = vec![0.01];
    assert!(simulate_mutual_information(&cfg, &b, &[0.5], &[2.0], (0.15, 0.4)).is_err());
    assert!(simulate_mutual_information(&cfg, &b, &[1.5], &[2.0], (0.0, 0.4)).is_err());
}

#[test]
fn sqrt_fit_recovers_synthetic_slope() {
    let ts: Vec<f64> = (1..=200).map(|k| k as f64 * 1e-3).collect();
    let vs: Vec<f64> = ts.iter().map(|t| (0.8 * t.sqrt()).min(0.1)).collect();
    let fit = fit_sqrt_growth(&ts, &vs).unwrap();
    assert!((fit.d - 0.8).abs() < 1e-12);
    assert!(fit.stderr < 1e-12);
    // 0.8√t reaches 0.095 at t ≈ 0.0141
    assert!((fit.t_steady - 0.0141).abs() < 2e-3, "{}", fit.t_steady);
    assert!(fit.t_max <= fit.t_steady / 4.0);
    assert!(fit_sqrt_growth(&ts[..5], &vs[..5]).is_err());
    assert!(fit_sqrt_growth(&ts, &vec![0.0; 200]).is_err());
}

#[test]
fn cut_index_rounds() {
    assert_eq!(cut_index(100, 0.4), 40);
    assert_eq!(cut_index(7, 0.5), 4);
    let g = CoherenceMatrix::from_diagonal(&[0.5, 0.5]);
    assert!(mutual_information_snapshot(&g, 0.1, &[2.0]).is_err());
}

proptest! {
    #[test]
    fn kernel_symmetric_bounded_and_decreasing(l in 0.0f64..1.0, q in 0.1f64..4.0) {
        let a = entropy_kernel(q, l, 1.0 - l);
        let b = entropy_kernel(q, 1.0 - l, l);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= -1e-15 && a <= LN_2 + 1e-12);
        prop_assert!(entropy_kernel(q + 0.5, l, 1.0 - l) <= a + 1e-12);
        prop_assert!(entropy_kernel(0.0, l, 1.0 - l) >= a - 1e-12);
    }
}
