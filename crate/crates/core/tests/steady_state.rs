use proptest::prelude::*;
use qssep_core::nc_combinatorics::enumerate_nc;
use qssep_core::quad::gauss_legendre_on;
use qssep_core::steady_state::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
        .collect()
}

#[test]
fn mobius_inversion_reproduces_closed_forms() {
    for n in 1..=4 {
        let mut worst: f64 = 0.0;
        for x in random_points(n, 1000, 17 + n as u64) {
            let a = g_steady(n, &x).unwrap();
            let b = g_closed_form(n, &x).unwrap();
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-12, "n = {n}: max deviation {worst:e}");
    }
}

/// Σ over NC(n) of products of g on blocks must give back the minimum.
fn resum(x: &[f64]) -> f64 {
    let n = x.len();
    enumerate_nc(n)
        .unwrap()
        .iter()
        .map(|p| {
            p.blocks()
                .iter()
                .map(|b| {
                    let xs: Vec<f64> = b.iter().map(|&i| x[i - 1]).collect();
                    g_steady(xs.len(), &xs).unwrap()
                })
                .product::<f64>()
        })
        .sum()
}

#[test]
fn moment_cumulant_resummation_gives_min() {
    for n in 1..=7 {
        for x in random_points(n, 50, 100 + n as u64) {
            assert!((resum(&x) - phi_min(&x)).abs() < 1e-12);
        }
    }
}

#[test]
fn two_point_resummation() {
    let (x, y) = (0.35, 0.8);
    let lhs = g_steady(2, &[x, y]).unwrap() + g_steady(1, &[x]).unwrap() * g_steady(1, &[y]).unwrap();
    assert!((lhs - x.min(y)).abs() < 1e-15);
}

#[test]
fn ordered_arguments_give_polynomials() {
    // for x1 < x2 < x3 the third cumulant is x1(1 − 2x2)(1 − x3)
    for mut x in random_points(3, 200, 5) {
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = x[0] * (1.0 - 2.0 * x[1]) * (1.0 - x[2]);
        assert!((g_steady(3, &x).unwrap() - expected).abs() < 1e-13);
    }
}

#[test]
fn order_cap() {
    assert!(g_steady(8, &[0.5; 8]).is_ok());
    assert!(g_steady(9, &[0.5; 9]).is_err());
    assert!(g_closed_form(5, &[0.5; 5]).is_err());
}

#[test]
fn reservoir_rescaling_of_two_point_function() {
    let f = rescale_reservoirs(1.0, 0.0).unwrap();
    for x in random_points(2, 100, 9) {
        let (a, b) = (x[0].min(x[1]), x[0].max(x[1]));
        assert!((f.eval(2, &[a, b]).unwrap() - a * (1.0 - b)).abs() < 1e-14);
    }
    let f = rescale_reservoirs(0.2, 0.7).unwrap();
    let x = [0.1, 0.4, 0.9];
    let expected = 0.5f64.powi(3) * g_steady(3, &x).unwrap();
    assert!((f.eval(3, &x).unwrap() - expected).abs() < 1e-15);
    assert!((f.eval(1, &[0.5]).unwrap() - 0.45).abs() < 1e-15);
}

#[test]
fn stationary_limit_of_g2_dynamics() {
    let problem = G2Problem {
        n_a: 1.0,
        n_b: 0.0,
        m: 200,
        g1_init: |x| 1.0 - x,
        g2_init: None,
        dt: Some(0.25 * 0.005 * 0.005),
    };
    let snaps = solve_g2_dynamics(&problem, &[0.4]).unwrap();
    let s = &snaps[0];
    let mut worst: f64 = 0.0;
    for i in 0..=s.m {
        for j in 0..=s.m {
            let (x, y) = (i as f64 * s.dx, j as f64 * s.dx);
            worst = worst.max((s.at(i, j) - (x.min(y) - x * y)).abs());
        }
    }
    assert!(worst < 2e-3, "max deviation {worst:e}");
    assert!(s.max_abs_asymmetry() < 1e-12);
}

#[test]
fn equilibrium_g2_decays() {
    let problem = G2Problem {
        n_a: 0.5,
        n_b: 0.5,
        m: 50,
        g1_init: domain_wall,
        g2_init: None,
        dt: None,
    };
    let snaps = solve_g2_dynamics(&problem, &[0.02, 0.5, 1.5]).unwrap();
    let peak = |s: &G2Field| s.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(peak(&snaps[0]) > 1e-3);
    assert!(peak(&snaps[2]) < 1e-4 * peak(&snaps[0]).max(1.0));
    assert!(peak(&snaps[2]) < peak(&snaps[1]));
}

#[test]
fn g2_dynamics_boundaries_and_validation() {
    let mut problem = G2Problem {
        n_a: 1.0,
        n_b: 0.0,
        m: 60,
        g1_init: domain_wall,
        g2_init: None,
        dt: None,
    };
    let snaps = solve_g2_dynamics(&problem, &[0.05]).unwrap();
    let s = &snaps[0];
    for k in 0..=s.m {
        assert_eq!(s.at(0, k), 0.0);
        assert_eq!(s.at(s.m, k), 0.0);
        assert_eq!(s.at(k, 0), 0.0);
        assert_eq!(s.at(k, s.m), 0.0);
    }
    assert_eq!(s.g1[0], 1.0);
    assert_eq!(s.g1[s.m], 0.0);
    problem.dt = Some(0.3 / 3600.0);
    assert!(solve_g2_dynamics(&problem, &[0.01]).is_err());
    problem.dt = None;
    problem.m = 20;
    assert!(solve_g2_dynamics(&problem, &[0.01]).is_err());
}

#[test]
fn w_functional_rank_one_constant_cumulants() {
    let kappa = [0.3, -0.2, 0.15, 0.05];
    let u = |x: f64| 0.5 + x * x;
    let g = |n: usize, _x: &[f64]| kappa[n - 1];
    let q = |x: f64, y: f64| u(x) * u(y);
    let w = w_functional(&g, &q, 4, 10).unwrap();
    // ∫u² = 1/4 + 1/3 + 1/5
    let s: f64 = 0.25 + 1.0 / 3.0 + 0.2;
    let expected: f64 = (1..=4).map(|n| kappa[n - 1] / n as f64 * s.powi(n as i32)).sum();
    assert!((w.value - expected).abs() < 1e-13, "{} vs {expected}", w.value);
}

#[test]
fn w_functional_second_order_matches_direct_integral() {
    let a = |x: f64| 1.0 + x;
    let g = |n: usize, x: &[f64]| g_steady(n, x).unwrap();
    let q = |x: f64, y: f64| a(x) * a(y);
    let w = w_functional(&g, &q, 2, 48).unwrap();
    // n=1: ∫ x a(x)² dx; n=2: ½∫∫ (min − xy) a(x)² a(y)²
    let (nodes, weights) = gauss_legendre_on(20, 0.0, 1.0);
    let a2 = |x: f64| a(x) * a(x);
    let first: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x * a2(*x)).sum();
    let mut tri = 0.0;
    for (y, wy) in nodes.iter().zip(&weights) {
        let (inner_x, inner_w) = gauss_legendre_on(20, 0.0, *y);
        let inner: f64 = inner_x.iter().zip(&inner_w).map(|(x, w)| w * x * a2(*x)).sum();
        tri += wy * a2(*y) * inner;
    }
    let second = 0.5 * (2.0 * tri - first * first);
    assert!((w.terms[0] - first).abs() < 1e-12);
    assert!((w.terms[1] - second).abs() < 2e-4, "{} vs {second}", w.terms[1]);
}

#[test]
fn w_functional_budget() {
    let g = |_: usize, _: &[f64]| 1.0;
    let q = |_: f64, _: f64| 1.0;
    assert!(w_functional(&g, &q, 6, 40).is_err());
    assert!(w_functional(&g, &q, 7, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cyclic_invariance(x in prop::collection::vec(0.0f64..1.0, 2..=7), shift in 0usize..7) {
        let n = x.len();
        let mut r = x.clone();
        r.rotate_left(shift % n);
        let a = g_steady(n, &x).unwrap();
        let b = g_steady(n, &r).unwrap();
        prop_assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn vanishes_at_boundary(x in prop::collection::vec(0.0f64..1.0, 2..=7), at in 0usize..7, edge in prop::bool::ANY) {
        let mut x = x;
        let n = x.len();
        x[at % n] = if edge { 1.0 } else { 0.0 };
        prop_assert!(g_steady(n, &x).unwrap().abs() < 1e-13);
    }

    #[test]
    fn equilibrium_vanishes(na in 0.0f64..1.0, x in prop::collection::vec(0.0f64..1.0, 2..=6)) {
        let f = rescale_reservoirs(na, na).unwrap();
        prop_assert_eq!(f.eval(x.len(), &x).unwrap(), 0.0);
    }
}
