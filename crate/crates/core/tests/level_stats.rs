use nalgebra::DMatrix;
use proptest::prelude::*;
use qssep_core::level_stats::*;
use qssep_core::Error;

#[test]
fn generators_close_under_commutation() {
    let g = gl4_generators();
    assert_eq!(g.commutator_defect(), 0.0);
    assert_eq!(g.adjoint_defect(), 0.0);
    let c = g.get(1, 2) * g.get(2, 1) - g.get(2, 1) * g.get(1, 2);
    assert_eq!(c, g.get(1, 1) - g.get(2, 2));
    assert_eq!(g.get(1, 3).transpose(), *g.get(3, 1));
}

#[test]
fn local_space_splits_into_five_charge_sectors() {
    let g = gl4_generators();
    let c = g.charge();
    assert_eq!(c, DMatrix::from_diagonal(&c.diagonal()));
    let mut dims = [0usize; 5];
    for s in 0..LOCAL_DIM {
        dims[(c[(s, s)] + 2.0) as usize] += 1;
    }
    assert_eq!(dims, [1, 4, 6, 4, 1]);
    // C commutes with every generator
    for a in 1..=4 {
        for b in 1..=4 {
            assert_eq!((&c * g.get(a, b) - g.get(a, b) * &c).amax(), 0.0);
        }
    }
    assert_eq!(CSector::Zero.local_states(), vec![0, 1, 2, 3, 4, 5]);
    assert_eq!(CSector::PlusOne.local_states(), vec![10, 11, 12, 13]);
    assert_eq!(CSector::MinusOne.local_states(), vec![6, 7, 8, 9]);
}

#[test]
fn wedge_labels_match_generator_weights() {
    let g = gl4_generators();
    for (i, &s) in CSector::Zero.local_states().iter().enumerate() {
        let (a, b) = C0_WEDGES[i];
        let mut w = [0; 4];
        w[a - 1] += 1;
        w[b - 1] += 1;
        assert_eq!(g.weight_of(s), w);
    }
}

#[test]
fn trace_operator_identities() {
    let q = trace_operator();
    let p = swap_operator(6);
    assert!((&q * &q - &q * 6.0).amax() < 1e-14);
    assert!((&p * &q - &q).amax() < 1e-14);
    assert!((&q * &p - &q).amax() < 1e-14);
    let id = DMatrix::<f64>::identity(36, 36);
    let ps = (&id + &p) * 0.5 - &q / 6.0;
    let pa = (&id - &p) * 0.5;
    let pt = &q / 6.0;
    assert!((&ps + &pa + &pt - &id).amax() < 1e-14);
    for m in [&ps, &pa, &pt] {
        assert!((m * m - m).amax() < 1e-14);
    }
    assert!((&ps * &pa).amax() < 1e-14 && (&ps * &pt).amax() < 1e-14);
    assert!((ps.trace() - 20.0).abs() < 1e-12 && (pa.trace() - 15.0).abs() < 1e-12);
}

#[test]
fn two_site_terms_agree_with_generators() {
    let g = gl4_generators();
    for s in [CSector::Zero, CSector::PlusOne, CSector::MinusOne] {
        let from_g = two_site_term_from_generators(&g, s);
        let direct = two_site_term(s, 1.0).unwrap();
        assert!((from_g - direct).amax() < 1e-14, "{s:?}");
    }
    // g = 1/2 is the so(6) chain Σ(P − Q/2) shifted by −1 per bond
    let half = two_site_term(CSector::Zero, 0.5).unwrap();
    let so6 = swap_operator(6) - trace_operator() * 0.5;
    assert!((half - so6 + DMatrix::<f64>::identity(36, 36)).amax() < 1e-14);
    assert!(two_site_term(CSector::PlusOne, 2.0).is_err());
}

#[test]
fn generator_term_leaves_mixed_products_invariant() {
    // the sum over gl(4) bilinears never couples different local charges
    let g = gl4_generators();
    let c = g.charge();
    for (r1, r2, c1, c2) in [(0, 10, 1, 11), (6, 10, 7, 12), (15, 14, 14, 15), (2, 7, 6, 3)] {
        let mut v = 0.0;
        for a in 1..=4 {
            for b in 1..=4 {
                v += g.get(a, b)[(r1, c1)] * g.get(b, a)[(r2, c2)];
            }
        }
        if c[(r1, r1)] != c[(c1, c1)] || c[(r2, r2)] != c[(c2, c2)] {
            assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn weight_sector_counting() {
    let ws = WeightSector::from_counts(CSector::PlusOne, &[1, 2, 3, 5]).unwrap();
    assert_eq!(ws.n, 11);
    assert_eq!(ws.cartan(), [-2.0, -3.0, 1.5]);
    assert_eq!(WeightSector::from_cartan(CSector::PlusOne, 11, [-2.0, -3.0, 1.5]).unwrap(), ws);
    assert_eq!(weight_sector_basis(&ws).unwrap().len(), 27720);
    let dims = momentum_sector_dims(&ws).unwrap();
    assert_eq!(dims.iter().sum::<usize>(), 27720);
    assert_eq!(dims[1], 2520);

    let c0 = WeightSector::from_cartan(CSector::Zero, 10, [5.0, 3.0, 3.0]).unwrap();
    assert_eq!(c0.weight, [9, 4, 2, 5]);
    assert_eq!(weight_sector_basis(&c0).unwrap().len(), 23940);
    assert!(WeightSector::from_cartan(CSector::Zero, 10, [5.5, 3.0, 3.0]).is_err());
    assert!(WeightSector::new(CSector::Zero, 4, [4, 4, 0, 1]).is_err());
    assert!(WeightSector::from_counts(CSector::PlusOne, &[1, 2]).is_err());
}

#[test]
fn chain_commutes_with_translation() {
    for (sector, counts) in [(CSector::PlusOne, vec![1, 1, 2, 2]), (CSector::Zero, vec![1, 1, 1, 1, 1, 0])] {
        let ws = WeightSector::from_counts(sector, &counts).unwrap();
        let g = if sector == CSector::Zero { 1.3 } else { 1.0 };
        let h = two_site_term(sector, g).unwrap();
        let (basis, m) = weight_sector_matrix(&ws, &h, 5000).unwrap();
        let d = sector.local_dim();
        let t = DMatrix::<f64>::from_fn(basis.len(), basis.len(), |r, c| {
            (basis[r] == translate(basis[c], d, ws.n)) as u8 as f64
        });
        assert!((&t * &m - &m * &t).amax() < 1e-12);
        assert!((&m - m.transpose()).amax() < 1e-14);
    }
}

#[test]
fn momentum_blocks_partition_the_spectrum() {
    for (sector, counts, g) in [
        (CSector::PlusOne, vec![1, 2, 1, 2], 1.0),
        (CSector::Zero, vec![1, 1, 1, 1, 1, 0], 1.0),
        (CSector::Zero, vec![2, 0, 1, 1, 0, 1], 2.0),
    ] {
        let ws = WeightSector::from_counts(sector, &counts).unwrap();
        let h = two_site_term(sector, g).unwrap();
        let (_, m) = weight_sector_matrix(&ws, &h, 5000).unwrap();
        let mut full: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        full.sort_by(|a, b| a.total_cmp(b));
        let mut blocks = Vec::new();
        for kappa in 0..ws.n {
            match build_sector_chain(&ws, g, kappa, ChainConstruction::Direct, 5000) {
                Ok(op) => {
                    assert!(op.hermiticity_defect() < 1e-12);
                    blocks.extend(op.eigenvalues());
                }
                Err(Error::InvalidArgument(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
        blocks.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(blocks.len(), full.len());
        for (a, b) in blocks.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn both_constructions_give_identical_matrices() {
    for (sector, counts) in [(CSector::PlusOne, vec![2, 1, 2, 2]), (CSector::MinusOne, vec![1, 3, 1, 2]), (CSector::Zero, vec![1, 2, 1, 1, 0, 1])] {
        let ws = WeightSector::from_counts(sector, &counts).unwrap();
        for kappa in [0, 1, 3] {
            let a = build_sector_chain(&ws, 1.0, kappa, ChainConstruction::Direct, 5000).unwrap();
            let b = build_sector_chain(&ws, 1.0, kappa, ChainConstruction::Generators, 5000).unwrap();
            assert_eq!(a.matrix, b.matrix);
        }
    }
}

#[test]
fn sector_chain_errors() {
    let ws = WeightSector::from_counts(CSector::PlusOne, &[1, 2, 3, 5]).unwrap();
    assert!(matches!(build_sector_chain(&ws, 1.0, 1, ChainConstruction::Direct, 1000), Err(Error::Budget(_))));
    assert!(build_sector_chain(&ws, 1.0, 11, ChainConstruction::Direct, 5000).is_err());
    let big = WeightSector::new(CSector::PlusOne, 12, [9, 9, 9, 9]).unwrap();
    assert!(build_sector_chain(&big, 1.0, 0, ChainConstruction::Direct, 5000).is_err());
    // all sites in the same state: only κ = 0 exists
    let flat = WeightSector::from_counts(CSector::PlusOne, &[5, 0, 0, 0]).unwrap();
    assert!(build_sector_chain(&flat, 1.0, 0, ChainConstruction::Direct, 10).is_ok());
    assert!(matches!(build_sector_chain(&flat, 1.0, 2, ChainConstruction::Direct, 10), Err(Error::InvalidArgument(_))));
}

#[test]
fn degeneracy_removal() {
    let distinct: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
    assert_eq!(remove_degeneracies(&distinct, DEFAULT_DEGENERACY_TOL), distinct);
    let doubled: Vec<f64> = distinct.iter().flat_map(|&x| [x, x + 1e-12]).collect();
    assert_eq!(remove_degeneracies(&doubled, DEFAULT_DEGENERACY_TOL).len(), 50);
    assert!(remove_degeneracies(&[], 1e-8).is_empty());
}

#[test]
fn unfolding_uniform_levels_gives_exponential_spacings() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let levels: Vec<f64> = (0..2000).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
    let u = unfold(&levels).unwrap();
    assert!(u.windows(2).all(|w| w[1] >= w[0]));
    let s: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    assert!((mean - 1.0).abs() < 1e-2, "mean spacing {mean}");
    let (d, p) = ks_test(&s, |x| 1.0 - (-x).exp());
    assert!(p > 0.01, "KS distance {d}, p = {p}");
    assert!(unfold(&levels[..50]).is_err());
}

#[test]
fn poisson_and_goe_ratio_references() {
    let p = spacing_statistics(&poisson_levels(20000, 1), true).unwrap();
    assert!((p.r_tilde_mean - R_TILDE_POISSON).abs() < 0.01, "{}", p.r_tilde_mean);
    assert!(p.r_tilde_err > 0.0 && p.r_tilde_err < 0.005);
    let g = spacing_statistics(&goe_eigenvalues(600, 2), false).unwrap();
    assert!(g.r_tilde_mean > 0.5, "{}", g.r_tilde_mean);
    assert!(g.r_tilde.iter().all(|r| (0.0..=1.0).contains(r)));
}

#[test]
fn reference_densities_are_normalized() {
    let n = 200_000;
    let h = 20.0 / n as f64;
    let int = |f: &dyn Fn(f64) -> f64, hi: f64| (0..n).map(|i| f((i as f64 + 0.5) * h * hi / 20.0)).sum::<f64>() * h * hi / 20.0;
    assert!((int(&poisson_spacing_density, 20.0) - 1.0).abs() < 1e-6);
    assert!((int(&wigner_surmise, 20.0) - 1.0).abs() < 1e-6);
    // ratio densities on [0, 1] carry half the mass
    assert!((int(&poisson_ratio_density, 1.0) - 0.5).abs() < 1e-6);
    assert!((int(&goe_ratio_density, 1.0) - 0.5).abs() < 1e-6);
    let mean_rt = int(&|r| 2.0 * r * poisson_ratio_density(r), 1.0);
    assert!((mean_rt - R_TILDE_POISSON).abs() < 1e-6);
    let mean_goe = int(&|r| 2.0 * r * goe_ratio_density(r), 1.0);
    assert!((mean_goe - R_TILDE_GOE).abs() < 1e-6);
}

#[test]
fn small_c1_sector_statistics() {
    let ws = WeightSector::from_counts(CSector::PlusOne, &[2, 2, 2, 3]).unwrap();
    let op = build_sector_chain(&ws, 1.0, 1, ChainConstruction::Direct, DEFAULT_DENSE_BUDGET).unwrap();
    let e = op.eigenvalues();
    let kept = remove_degeneracies(&e, DEFAULT_DEGENERACY_TOL);
    assert!(kept.len() < e.len());
    let stats = spacing_statistics(&kept, true).unwrap();
    assert_eq!(stats.n_eig, kept.len());
    assert!(stats.r_tilde_mean > 0.2 && stats.r_tilde_mean < 0.6);
    let rows = histogram_rows(&stats);
    assert_eq!(rows.len(), 60);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn r_tilde_in_unit_interval(levels in prop::collection::vec(-10.0f64..10.0, 3..60)) {
        if let Ok(s) = spacing_statistics(&levels, false) {
            prop_assert!(s.r_tilde.iter().all(|r| (0.0..=1.0).contains(r)));
            prop_assert!(s.n_eig <= levels.len());
        }
    }

    #[test]
    fn degeneracy_removal_never_grows(levels in prop::collection::vec(-5.0f64..5.0, 0..80)) {
        let out = remove_degeneracies(&levels, 1e-3);
        prop_assert!(out.len() <= levels.len());
        prop_assert!(out.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn translation_has_order_n(code in 0u64..4096, n in 2usize..7) {
        let d = 4usize;
        let c = code % (d as u64).pow(n as u32);
        let mut x = c;
        for _ in 0..n { x = translate(x, d, n); }
        prop_assert_eq!(x, c);
    }
}
