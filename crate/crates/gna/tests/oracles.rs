//! Hand-computed and reference-implementation oracles.

use gna::{
    chebyshev_factor, make_random_spd_problem, make_spd_problem_with_spectrum, offline_extrapolate,
    online_accelerate, reference_cg, reference_gmres, run_baseline, solve_gamma, solve_gamma_from_gram,
    IterateHistory, LinearFixedPoint, MethodConfig, MethodKind, OnlineOptions, WeightSpec,
};
use nalgebra::{DMatrix, DVector};

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn diagonal(eigs: &[f64], x_star: &[f64]) -> LinearFixedPoint {
    let g = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    LinearFixedPoint::from_dense(g, DVector::from_column_slice(x_star), None).unwrap()
}

#[test]
fn gram_oracle_two_columns() {
    // γ = M⁻¹1 / 1ᵀM⁻¹1 with M = diag(1, 4) gives (4/5, 1/5)
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
    let g = solve_gamma_from_gram(&m, 0.0, "oracle").unwrap();
    assert!((g.gamma[0] - 0.8).abs() < 1e-14 && (g.gamma[1] - 0.2).abs() < 1e-14);
}

#[test]
fn orthogonal_residuals_are_averaged() {
    // residuals e₁ and e₂: min ‖γ₁e₁ + γ₂e₂‖ on the simplex plane is (½, ½)
    let mut h = IterateHistory::new(2, None).unwrap();
    h.push(
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![1.0, 0.0]),
    )
    .unwrap();
    h.push(
        DVector::from_vec(vec![5.0, 5.0]),
        DVector::from_vec(vec![5.0, 6.0]),
    )
    .unwrap();
    let g = solve_gamma(&h, &WeightSpec::Identity, 0.0).unwrap();
    assert!((g.gamma[0] - 0.5).abs() < 1e-14 && (g.gamma[1] - 0.5).abs() < 1e-14);
}

#[test]
fn scalar_problem_solved_in_two_evaluations() {
    // g(x) = ½(x − 3) + 3; the secant through two iterates hits x* = 3
    let p = diagonal(&[0.5], &[3.0]);
    let (_, h) = run_baseline(&p, &DVector::from_element(1, 1.0), 2).unwrap();
    for kind in MethodKind::BETA_KINDS {
        let config = MethodConfig::new(kind, -1.0).unwrap();
        let out = offline_extrapolate(&p, &h, 2, &config).unwrap();
        assert!((out.y[0] - 3.0).abs() < 1e-12, "{kind}: {}", out.y[0]);
    }
}

#[test]
fn baseline_contracts_at_the_spectral_radius() {
    let p = diagonal(&[0.5, 0.5, 0.5], &[1.0, -1.0, 2.0]);
    let (record, _) = run_baseline(&p, &DVector::zeros(3), 6).unwrap();
    for w in record.rows.windows(2) {
        assert!((w[1].res_l2 / w[0].res_l2 - 0.5).abs() < 1e-14);
    }
}

#[test]
fn two_distinct_eigenvalues_need_three_iterates() {
    // the minimal polynomial has degree 2, so N = 3 is exact
    let p = diagonal(&[0.2, 0.9, 0.2, 0.9], &[1.0, 2.0, 3.0, 4.0]);
    let (_, h) = run_baseline(&p, &DVector::zeros(4), 3).unwrap();
    let config = MethodConfig::new(MethodKind::Anderson, -1.0).unwrap();
    let out = offline_extrapolate(&p, &h, 3, &config).unwrap();
    assert!(out.residual_norm < 1e-12, "{}", out.residual_norm);
}

#[test]
fn chebyshev_factor_closed_form() {
    let kappa: f64 = 0.01;
    let xi = (1.0 - kappa.sqrt()) / (1.0 + kappa.sqrt());
    assert!((chebyshev_factor(kappa, 1).unwrap() - 0.5).abs() < 1e-15);
    let p = xi.powi(4);
    assert!((chebyshev_factor(kappa, 5).unwrap() - p / (1.0 + p * p)).abs() < 1e-15);
    assert!(chebyshev_factor(0.0, 3).is_err());
    assert!(chebyshev_factor(kappa, 0).is_err());
}

#[test]
fn identity_weight_matches_reference_gmres() {
    let p = make_random_spd_problem(10, 1e-2, 4).unwrap();
    let y0 = DVector::from_element(10, 1.0);
    let (_, h) = run_baseline(&p, &y0, 8).unwrap();
    let config = MethodConfig::new(MethodKind::Gmres, -1.0).unwrap();
    for n in 2..=8 {
        let ours = offline_extrapolate(&p, &h, n, &config).unwrap().y;
        let reference = reference_gmres(&p, &y0, n).unwrap();
        assert!(rel(&ours, &reference) < 1e-8, "N = {n}");
    }
}

#[test]
fn online_cg_matches_reference_cg() {
    let p = make_spd_problem_with_spectrum(&[0.0, 0.3, 0.5, 0.7, 0.8, 0.95, 0.99], 2).unwrap();
    let y0 = DVector::from_element(7, 1.0);
    let config = MethodConfig::new(MethodKind::Cg, -1.0).unwrap();
    let run = online_accelerate(&p, &y0, &config, &OnlineOptions::new(None, 5)).unwrap();
    // row i + 1 holds the residual of the i-th CG iterate
    for (i, row) in run.rows.iter().enumerate().skip(1) {
        let x = reference_cg(&p, &y0, i).unwrap();
        let expected = p.residual(&x).unwrap().norm();
        assert!(
            (row.res_l2 - expected).abs() <= 1e-8 * expected.max(1e-12),
            "iter {}",
            row.iter
        );
    }
}

#[test]
fn anderson_terminates_on_small_problem() {
    let p = make_random_spd_problem(8, 1e-3, 9).unwrap();
    let y0 = DVector::from_element(8, 1.0);
    let config = MethodConfig::new(MethodKind::Anderson, -1.0).unwrap();
    let run = online_accelerate(&p, &y0, &config, &OnlineOptions::new(None, 10)).unwrap();
    let r1 = run.first_residual().unwrap();
    assert!(run.final_residual().unwrap() <= 1e-10 * r1);
    assert_eq!(run.restarts(), 0);
    assert_eq!(run.bound_violations(1e-9, 1e-12), 0);
}
