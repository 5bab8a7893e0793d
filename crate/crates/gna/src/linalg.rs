//! Small dense helpers shared by the solvers and the oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Matrices whose reciprocal 1-norm condition number falls below this are
/// treated as numerically singular.
pub const SINGULAR_RCOND: f64 = f64::EPSILON;

pub fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

pub fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a small square matrix together with its 1-norm condition number.
///
/// Returns `None` when LU breaks down or the reciprocal condition number is
/// below [`SINGULAR_RCOND`].
pub fn checked_inverse(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if m.nrows() == 0 {
        return Some((DMatrix::zeros(0, 0), 1.0));
    }
    let inv = m.clone().lu().try_inverse()?;
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || inv.iter().any(|v| !v.is_finite()) || 1.0 / cond < SINGULAR_RCOND {
        return None;
    }
    Some((inv, cond))
}

/// Solves `m x = rhs` for a small square system, failing on numerical singularity.
pub fn checked_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (inv, _) = checked_inverse(m)?;
    Some(inv * rhs)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest relative asymmetry `‖M − Mᵀ‖_F / ‖M‖_F`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / scale
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Condition estimate above which a Gram-based solve loses too many digits
/// and callers switch to [`projected_solve`] on the raw columns.
pub const GRAM_COND_LIMIT: f64 = 1e8;

/// Solves the Petrov–Galerkin system `Vᵀ(A z − b) = 0` without forming
/// `VᵀA`.
///
/// `V` is replaced by an orthonormal basis `U` of its range, so the square
/// system actually solved is `UᵀA z = Uᵀb`, whose condition number is that
/// of `VᵀA` divided by the condition number of `V`. Returns the solution and
/// a condition estimate, or `None` when `V` is rank deficient or `UᵀA` is
/// numerically singular.
pub fn projected_solve(
    test: &DMatrix<f64>,
    trial: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let rhs = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    projected_solve_many(test, trial, &rhs).map(|(z, cond)| (z.column(0).into_owned(), cond))
}

/// [`projected_solve`] for several right-hand sides at once.
pub fn projected_solve_many(
    test: &DMatrix<f64>,
    trial: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, f64)> {
    let (d, m) = test.shape();
    if m == 0 {
        return Some((DMatrix::zeros(0, rhs.ncols()), 1.0));
    }
    if d < m || trial.shape() != (d, m) || rhs.nrows() != d {
        return None;
    }
    let svd = test.clone().svd(true, false);
    let sv = &svd.singular_values;
    if !(sv.min() > f64::EPSILON * d as f64 * sv.max()) {
        return None;
    }
    let u = svd.u?;
    let a = u.transpose() * trial;
    let scale = DVector::from_fn(m, |j, _| a.column(j).norm());
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return None;
    }
    let scaled = DMatrix::from_fn(m, m, |i, j| a[(i, j)] / scale[j]);
    let (inv, cond) = checked_inverse(&scaled)?;
    let mut z = inv * (u.transpose() * rhs);
    for (mut row, s) in z.row_iter_mut().zip(scale.iter()) {
        row /= *s;
    }
    Some((z, cond))
}

/// Orthogonal projector onto the complement of the column space of `v`.
pub fn complement_projector(v: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = v.nrows();
    let gram = v.transpose() * v;
    let coef = checked_solve(&gram, &v.transpose())?;
    Some(DMatrix::identity(d, d) - v * coef)
}

/// Power iteration for the dominant eigenvalue magnitude of a symmetric operator.
pub fn power_iteration<F>(dim: usize, apply: F, iters: usize, tol: f64) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + 0.1 * ((i * 7919 % 97) as f64) / 97.0);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let next = v.dot(&w);
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
        if (next - estimate).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return next.abs();
        }
        estimate = next;
    }
    estimate.abs()
}
