//! Randomized invariants.

use gna::{
    build_multisecant_matrix, make_random_spd_problem, make_surrogate_dataset, read_libsvm, run_baseline,
    solve_gamma, write_libsvm, IncrementalGamma, Initialization, IterateHistory, MultisecantKind,
    SecantWeight, WeightSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn baseline(d: usize, kappa: f64, seed: u64, n: usize) -> IterateHistory {
    let p = make_random_spd_problem(d, kappa, seed).unwrap();
    let y0 = DVector::from_fn(d, |i, _| 1.0 + (i as f64).sin());
    run_baseline(&p, &y0, n).unwrap().1
}

fn weighted_norm(history: &IterateHistory, gamma: &DVector<f64>) -> f64 {
    history.combine_r(gamma).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gamma_sums_to_one(d in 4usize..16, seed in 0u64..1000, n in 1usize..5) {
        let h = baseline(d, 1e-2, seed, n);
        for spec in [WeightSpec::Identity, WeightSpec::InverseOfGminusI, WeightSpec::ShiftedInverse { beta: -1.0 }] {
            let g = solve_gamma(&h, &spec, 0.0).unwrap();
            prop_assert!((g.gamma.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_gamma_is_optimal(d in 5usize..14, seed in 0u64..1000, dir in prop::collection::vec(-1.0f64..1.0, 4)) {
        // any feasible perturbation keeps Σγ = 1 and cannot reduce ‖Rγ‖₂
        let h = baseline(d, 1e-1, seed, 4);
        let g = solve_gamma(&h, &WeightSpec::Identity, 0.0).unwrap().gamma;
        let mean = dir.iter().sum::<f64>() / 4.0;
        let delta = DVector::from_iterator(4, dir.iter().map(|v| (v - mean) * 1e-3));
        prop_assert!(weighted_norm(&h, &(&g + delta)) >= weighted_norm(&h, &g) * (1.0 - 1e-10));
    }

    #[test]
    fn window_respects_capacity(cap in 1usize..6, pushes in 1usize..20, seed in 0u64..100) {
        let p = make_random_spd_problem(6, 1e-2, seed).unwrap();
        let mut h = IterateHistory::new(6, Some(cap)).unwrap();
        let mut y = DVector::from_element(6, 1.0);
        for _ in 0..pushes {
            let x = p.apply(&y).unwrap();
            h.push(y, x.clone()).unwrap();
            y = x;
        }
        prop_assert_eq!(h.len(), pushes.min(cap));
        prop_assert_eq!(h.last_x().unwrap(), &y);
        // cached Gram stays consistent with the stored columns
        let r = h.r_matrix();
        prop_assert!((h.gram_rr() - r.transpose() * &r).norm() <= 1e-10 * h.gram_rr().norm().max(1.0));
    }

    #[test]
    fn incremental_matches_scratch(seed in 0u64..500, cap in 2usize..6, pushes in 2usize..14) {
        let p = make_random_spd_problem(9, 1e-2, seed).unwrap();
        let spec = WeightSpec::ShiftedInverse { beta: -1.0 };
        let mut h = IterateHistory::new(9, Some(cap)).unwrap();
        let mut inc = IncrementalGamma::new(spec.clone(), 0.0).unwrap();
        let mut y = DVector::from_element(9, 1.0);
        for _ in 0..pushes {
            let x = p.apply(&y).unwrap();
            let outcome = h.push(y, x.clone()).unwrap();
            inc.update(&h, outcome.evicted).unwrap();
            y = x;
        }
        let fast = inc.gamma_for(&h).unwrap();
        let slow = solve_gamma(&h, &spec, 0.0).unwrap().gamma;
        // forward error grows with the condition of the reduced system
        let tol = (1e-12 * fast.gram_condition_estimate).max(1e-10);
        let err = (&fast.gamma - &slow).norm() / slow.norm();
        prop_assert!(err <= tol, "{:.1e} > {:.1e}", err, tol);
    }

    #[test]
    fn multisecant_satisfies_secant_equations(seed in 0u64..500, beta in prop_oneof![Just(-1.0), Just(-0.5), Just(2.0)]) {
        let h = baseline(10, 1e-1, seed, 4);
        let (rc, yc) = (h.rc_matrix(), h.yc_matrix());
        for kind in MultisecantKind::ALL {
            let m = build_multisecant_matrix(kind, &h, &SecantWeight::Identity, &Initialization::Scaled(beta)).unwrap();
            let err = (&m.h * &rc - &yc).norm() / yc.norm();
            prop_assert!(err < 1e-8, "{:?}: {:.1e}", kind, err);
            if kind.is_symmetric() {
                prop_assert!((&m.h - m.h.transpose()).norm() <= 1e-8 * m.h.norm());
            }
        }
    }

    #[test]
    fn libsvm_round_trip(rows in 1usize..12, cols in 1usize..8, seed in 0u64..100) {
        let (a, b) = make_surrogate_dataset(rows, cols, 1, seed).unwrap();
        let dir = tempdir();
        let path = dir.join(format!("rt-{rows}-{cols}-{seed}.svm"));
        write_libsvm(&path, &a, &b).unwrap();
        let (a2, b2) = read_libsvm(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        prop_assert_eq!(b2, b);
        // trailing all-zero columns are not recoverable from the sparse format
        let shared = a2.ncols();
        prop_assert!(shared <= cols);
        prop_assert_eq!(a2, a.columns(0, shared).into_owned());
        prop_assert!(a.columns(shared, cols - shared).iter().all(|v| *v == 0.0));
    }
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("gna-properties");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn reduced_gram_is_symmetric_for_symmetric_problems() {
    // YᵀR carries a rank-one offset from x*; the reduced CᵀYᵀRC does not
    let h = baseline(12, 1e-3, 5, 6);
    let (m, _): (DMatrix<f64>, _) = WeightSpec::InverseOfGminusI.reduced_system(&h).unwrap();
    assert!((&m - m.transpose()).norm() <= 1e-8 * m.norm());
}
