//! Linear fixed-point problems `g(x) = G(x − x*) + x*` with symmetric `G`.
//!
//! Two families are provided: dense synthetic maps with a prescribed
//! spectrum in `[0, 1 − κ]`, and the fixed-step gradient map of a ridge
//! regression objective `½(‖Ax − b‖² + λ‖x‖²)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Largest dimension for which the ridge constructor uses a dense symmetric
/// eigensolver for the extreme eigenvalues of the Hessian.
pub const DENSE_SPECTRUM_CAP: usize = 2000;

#[derive(Clone, Debug)]
enum Operator {
    /// `g(y) = G y + offset`
    Dense { g: DMatrix<f64>, offset: DVector<f64> },
    /// `g(y) = y − h (H y − Aᵀb)` with `H = AᵀA + λI`
    Ridge {
        a: DMatrix<f64>,
        b: DVector<f64>,
        lambda: f64,
        step: f64,
        hessian: DMatrix<f64>,
        atb: DVector<f64>,
    },
}

/// An affine fixed-point map with symmetric linear part `G`, `0 ⪯ G ⪯ (1 − κ)I`.
///
/// Problems are immutable once built and can be shared across threads.
#[derive(Clone, Debug)]
pub struct LinearFixedPoint {
    op: Operator,
    dim: usize,
    x_star: Option<DVector<f64>>,
    kappa: Option<f64>,
}

impl LinearFixedPoint {
    /// Builds `g(y) = G(y − x*) + x*` from a dense symmetric `G`.
    pub fn from_dense(g: DMatrix<f64>, x_star: DVector<f64>, kappa: Option<f64>) -> Result<Self> {
        let d = g.nrows();
        if d == 0 || g.ncols() != d {
            return Err(Error::InvalidInput(format!(
                "G must be square and non-empty, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        check_dim(d, x_star.len())?;
        if linalg::asymmetry(&g) > 1e-10 {
            return Err(Error::InvalidInput("G must be symmetric".into()));
        }
        if let Some(k) = kappa {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::InvalidInput(format!("kappa must lie in (0, 1], got {k}")));
            }
        }
        let offset = &x_star - &g * &x_star;
        Ok(Self {
            op: Operator::Dense { g, offset },
            dim: d,
            x_star: Some(x_star),
            kappa,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Known optimum, when the problem carries one for instrumentation.
    pub fn x_star(&self) -> Option<&DVector<f64>> {
        self.x_star.as_ref()
    }

    /// Spectral margin `κ` with `‖G‖₂ ≤ 1 − κ`.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    /// Gradient step size for ridge problems.
    pub fn step(&self) -> Option<f64> {
        match &self.op {
            Operator::Ridge { step, .. } => Some(*step),
            Operator::Dense { .. } => None,
        }
    }

    /// Regularization weight for ridge problems.
    pub fn lambda(&self) -> Option<f64> {
        match &self.op {
            Operator::Ridge { lambda, .. } => Some(*lambda),
            Operator::Dense { .. } => None,
        }
    }

    /// `g(y)`.
    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, y.len())?;
        Ok(match &self.op {
            Operator::Dense { g, offset } => g * y + offset,
            Operator::Ridge {
                step, hessian, atb, ..
            } => y - (hessian * y - atb) * *step,
        })
    }

    /// `(G − I) v`, the linear part of the residual map.
    pub fn apply_g_minus_i(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, v.len())?;
        Ok(match &self.op {
            Operator::Dense { g, .. } => g * v - v,
            Operator::Ridge { step, hessian, .. } => -(hessian * v) * *step,
        })
    }

    /// `r = g(y) − y`.
    pub fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.apply(y)?;
        Ok(x - y)
    }

    /// Objective whose fixed-step gradient map is `g` (ridge problems only).
    pub fn objective(&self, y: &DVector<f64>) -> Option<f64> {
        match &self.op {
            Operator::Ridge { a, b, lambda, .. } if y.len() == self.dim => {
                let fit = a * y - b;
                Some(0.5 * (fit.norm_squared() + lambda * y.norm_squared()))
            }
            _ => None,
        }
    }

    /// Gradient of [`objective`](Self::objective).
    pub fn gradient(&self, y: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.op {
            Operator::Ridge { a, b, lambda, .. } if y.len() == self.dim => {
                Some(a.transpose() * (a * y - b) + y * *lambda)
            }
            _ => None,
        }
    }

    /// Dense `G`.
    pub fn dense_g(&self) -> DMatrix<f64> {
        match &self.op {
            Operator::Dense { g, .. } => g.clone(),
            Operator::Ridge { step, hessian, .. } => DMatrix::identity(self.dim, self.dim) - hessian * *step,
        }
    }
}

/// Extreme eigenvalues `(L, μ)` of a symmetric positive semidefinite matrix.
fn extreme_eigenvalues(h: &DMatrix<f64>) -> (f64, f64) {
    let d = h.nrows();
    if d <= DENSE_SPECTRUM_CAP {
        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        (eig.max(), eig.min())
    } else {
        let l = linalg::power_iteration(d, |v| h * v, 10_000, 1e-12);
        let shifted = linalg::power_iteration(d, |v| v * l - h * v, 100_000, 1e-14);
        (l, l - shifted)
    }
}

/// Validated ridge data.
fn ridge_gram(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput("empty design matrix".into()));
    }
    check_dim(a.nrows(), b.len())?;
    Ok(a.transpose() * a)
}

fn ridge_from_parts(
    a: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
    step: Option<f64>,
    ata: DMatrix<f64>,
    l0: f64,
    mu0: f64,
) -> Result<LinearFixedPoint> {
    let d = a.ncols();
    let l = l0 + lambda;
    let mu = mu0 + lambda;
    if !(mu > 0.0) {
        return Err(Error::Config(format!(
            "objective is not strongly convex (smallest Hessian eigenvalue {mu:e})"
        )));
    }
    let h = step.unwrap_or(1.0 / l);
    if !(h > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    // G = I − hH is PSD iff hL ≤ 1
    if h * l > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "step {h:e} too large: G = I - hH is not positive semidefinite (h*L = {:e})",
            h * l
        )));
    }
    let mut hessian = ata;
    for i in 0..d {
        hessian[(i, i)] += lambda;
    }
    let atb = a.transpose() * &b;
    let x_star = hessian
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("Hessian is not positive definite".into()))?
        .solve(&atb);
    let kappa = (h * mu).min(1.0);
    Ok(LinearFixedPoint {
        op: Operator::Ridge {
            a,
            b,
            lambda,
            step: h,
            hessian,
            atb,
        },
        dim: d,
        x_star: Some(x_star),
        kappa: Some(kappa),
    })
}

/// Fixed-step gradient map of `½(‖Ax − b‖² + λ‖x‖²)`.
///
/// The default step is `1/L`, which keeps `G = I − hH` positive semidefinite
/// and gives `κ = μ/L`. `x*` is obtained by a direct Cholesky solve and is
/// used only for instrumentation.
pub fn make_ridge_problem(
    a: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
    step: Option<f64>,
) -> Result<LinearFixedPoint> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let ata = ridge_gram(&a, &b)?;
    let (l0, mu0) = extreme_eigenvalues(&ata);
    ridge_from_parts(a, b, lambda, step, ata, l0, mu0)
}

/// Ridge problem whose regularization is chosen so that `hμ = κ_target`.
///
/// The required `λ` is negative whenever the data alone is better conditioned
/// than the target; it is accepted as long as the objective stays strongly
/// convex.
pub fn make_ridge_problem_with_kappa(
    a: DMatrix<f64>,
    b: DVector<f64>,
    kappa_target: f64,
    step: Option<f64>,
) -> Result<LinearFixedPoint> {
    if !(kappa_target > 0.0 && kappa_target < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target kappa must lie in (0, 1), got {kappa_target}"
        )));
    }
    let ata = ridge_gram(&a, &b)?;
    let (l0, mu0) = extreme_eigenvalues(&ata);
    let lambda = match step {
        // κ = μ/L with h = 1/L
        None => (kappa_target * l0 - mu0) / (1.0 - kappa_target),
        // κ = h (μ0 + λ)
        Some(h) => kappa_target / h - mu0,
    };
    ridge_from_parts(a, b, lambda, step, ata, l0, mu0)
}

/// Random dense problem with spectrum in `[0, 1 − κ]`, both endpoints included.
pub fn make_random_spd_problem(d: usize, kappa: f64, seed: u64) -> Result<LinearFixedPoint> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidInput(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = 1.0 - kappa;
    let eigs: Vec<f64> = match d {
        1 => vec![top],
        _ => {
            let mut e = vec![0.0, top];
            e.extend((2..d).map(|_| rng.random::<f64>() * top));
            e
        }
    };
    spd_problem(&eigs, Some(kappa), &mut rng)
}

/// Dense problem with the given eigenvalues of `G` (each in `[0, 1)`).
pub fn make_spd_problem_with_spectrum(eigenvalues: &[f64], seed: u64) -> Result<LinearFixedPoint> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidInput("spectrum must be non-empty".into()));
    }
    if eigenvalues.iter().any(|&e| !(0.0..1.0).contains(&e)) {
        return Err(Error::InvalidInput("eigenvalues of G must lie in [0, 1)".into()));
    }
    let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spd_problem(eigenvalues, Some(1.0 - top), &mut rng)
}

fn spd_problem(eigs: &[f64], kappa: Option<f64>, rng: &mut ChaCha8Rng) -> Result<LinearFixedPoint> {
    let d = eigs.len();
    let q = linalg::random_orthogonal(d, rng);
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    let g = linalg::symmetrize(&(&q * lambda * q.transpose()));
    let x_star = linalg::random_vector(d, rng);
    LinearFixedPoint::from_dense(g, x_star, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scalar_problem() -> LinearFixedPoint {
        LinearFixedPoint::from_dense(
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 0.0),
            Some(0.5),
        )
        .unwrap()
    }

    #[test]
    fn scalar_apply_and_residual() {
        let p = scalar_problem();
        let y = DVector::from_element(1, 2.0);
        assert_eq!(p.apply(&y).unwrap()[0], 1.0);
        assert_eq!(p.residual(&y).unwrap()[0], -1.0);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let p = make_random_spd_problem(10, 0.1, 4).unwrap();
        let xs = p.x_star().unwrap().clone();
        let gx = p.apply(&xs).unwrap();
        assert!((&gx - &xs).norm() <= 1e-12 * xs.norm());
        assert!(p.residual(&xs).unwrap().norm() <= 1e-12 * xs.norm());
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let p = scalar_problem();
        let y = DVector::from_element(2, 1.0);
        assert!(matches!(p.apply(&y), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(p.residual(&y), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            p.apply_g_minus_i(&y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn residual_matches_linear_part() {
        let p = make_random_spd_problem(15, 0.01, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = p.x_star().unwrap();
        for _ in 0..10 {
            let y = linalg::random_vector(15, &mut rng);
            let r = p.residual(&y).unwrap();
            let lin = p.apply_g_minus_i(&(&y - xs)).unwrap();
            assert!((&r - &lin).norm() <= 1e-12 * r.norm().max(1.0));
            // same floating-point expression
            assert_eq!(r, p.apply(&y).unwrap() - &y);
        }
    }

    #[test]
    fn symmetric_linear_part() {
        let p = make_random_spd_problem(12, 0.2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let u = linalg::random_vector(12, &mut rng);
            let v = linalg::random_vector(12, &mut rng);
            let lhs = u.dot(&p.apply_g_minus_i(&v).unwrap());
            let rhs = p.apply_g_minus_i(&u).unwrap().dot(&v);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn generator_is_deterministic_and_tight() {
        let a = make_random_spd_problem(25, 1e-6, 77).unwrap();
        let b = make_random_spd_problem(25, 1e-6, 77).unwrap();
        assert_eq!(a.dense_g(), b.dense_g());
        assert_eq!(a.x_star(), b.x_star());
        let eig = SymmetricEigen::new(a.dense_g()).eigenvalues;
        assert!((eig.max() - (1.0 - 1e-6)).abs() < 1e-12);
        assert!(eig.min().abs() < 1e-12);
    }

    #[test]
    fn generator_d1() {
        let p = make_random_spd_problem(1, 0.3, 0).unwrap();
        assert!((p.dense_g()[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn generator_rejects_bad_input() {
        assert!(make_random_spd_problem(0, 0.1, 0).is_err());
        assert!(make_random_spd_problem(3, 0.0, 0).is_err());
        assert!(make_random_spd_problem(3, 1.0, 0).is_err());
    }

    #[test]
    fn ridge_identity_design() {
        let p = make_ridge_problem(DMatrix::identity(4, 4), DVector::zeros(4), 0.0, Some(1.0)).unwrap();
        assert!(p.dense_g().norm() < 1e-15);
        assert!(p.x_star().unwrap().norm() < 1e-15);
    }

    #[test]
    fn ridge_step_too_large() {
        let a = DMatrix::identity(3, 3) * 2.0;
        let err = make_ridge_problem(a, DVector::zeros(3), 0.0, Some(1.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn ridge_gradient_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = linalg::random_matrix(30, 8, &mut rng);
        let b = DVector::from_element(30, 1.0);
        let p = make_ridge_problem(a, b, 0.5, None).unwrap();
        let h = p.step().unwrap();
        for _ in 0..5 {
            let y = linalg::random_vector(8, &mut rng);
            let r = p.residual(&y).unwrap();
            let grad = p.gradient(&y).unwrap();
            assert!((&r + &grad * h).norm() <= 1e-12 * r.norm().max(1.0));
            // central finite differences of the objective
            let eps = 1e-5;
            for i in 0..8 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += eps;
                ym[i] -= eps;
                let fd = (p.objective(&yp).unwrap() - p.objective(&ym).unwrap()) / (2.0 * eps);
                assert!((fd - grad[i]).abs() <= 1e-6 * grad.norm().max(1.0));
            }
        }
    }

    #[test]
    fn ridge_kappa_targeting() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = linalg::random_matrix(50, 25, &mut rng);
        let b = DVector::from_element(50, 1.0);
        let p = make_ridge_problem_with_kappa(a, b, 1e-6, None).unwrap();
        let eig = SymmetricEigen::new(p.dense_g()).eigenvalues;
        assert!((eig.max() - (1.0 - 1e-6)).abs() < 1e-9, "{}", eig.max());
        assert!(eig.min().abs() < 1e-9);
        assert!((p.kappa().unwrap() - 1e-6).abs() < 1e-12);
    }
}
