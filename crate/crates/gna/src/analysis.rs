//! Convergence bounds and reference oracles.
//!
//! Everything here is dense and meant for desk-scale verification: the
//! Chebyshev rate, the optimal-polynomial residual on the Krylov subspace,
//! the preconditioner amplification factor, and textbook GMRES and CG.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::LinearFixedPoint;
use crate::gamma::dense_weight;
use crate::history::IterateHistory;
use crate::linalg;
use crate::methods::{dense_preconditioner, gna_step_detailed, MethodConfig, DENSE_CAP};

/// `ξ = (1 − √κ)/(1 + √κ)`.
pub fn chebyshev_xi(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidInput(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    let s = kappa.sqrt();
    Ok((1.0 - s) / (1.0 + s))
}

/// Rescaled Chebyshev factor `ξ^{N−1} / (1 + ξ^{2(N−1)})`.
///
/// At `N = 1` this evaluates to `1/2` for every `κ`, below the trivial
/// value 1, so bounds are only meaningful from `N = 2` on.
pub fn chebyshev_factor(kappa: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let xi = chebyshev_xi(kappa)?;
    let p = xi.powi((n - 1) as i32);
    Ok(p / (1.0 + p * p))
}

/// Outcome of [`optimal_polynomial_residual`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolynomialResidual {
    pub value: f64,
    /// The Krylov basis lost rank: some polynomial of degree below `N`
    /// annihilates `r₁` and the minimum is zero.
    pub degenerate: bool,
}

/// `min ‖p(G)r₁‖_W` over polynomials of degree at most `N − 1` with `p(1) = 1`.
///
/// Builds a `W`-orthonormal basis `q_k = φ_k(G)r₁` of the Krylov subspace
/// by Arnoldi with reorthogonalization while tracking `φ_k(1)`; the
/// constrained minimum is then `1 / ‖(φ_0(1), …, φ_{N−1}(1))‖₂`.
pub fn optimal_polynomial_residual(
    g: &DMatrix<f64>,
    r1: &DVector<f64>,
    n: usize,
    w: &DMatrix<f64>,
) -> Result<PolynomialResidual> {
    let d = g.nrows();
    if d > DENSE_CAP {
        return Err(Error::DenseCap {
            dim: d,
            cap: DENSE_CAP,
        });
    }
    check_dim(d, r1.len())?;
    check_dim(d, w.nrows())?;
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(w * b));
    let norm0 = ip(r1, r1).max(0.0).sqrt();
    if norm0 == 0.0 {
        return Ok(PolynomialResidual {
            value: 0.0,
            degenerate: true,
        });
    }
    // rank loss is judged against ‖G‖, not ‖Gq‖: an eigenvector with a tiny
    // eigenvalue leaves a residual of order ε‖G‖ after orthogonalization
    let g_norm = linalg::spectral_norm(g);
    let mut basis = vec![r1 / norm0];
    let mut at_one = vec![1.0 / norm0];
    for _ in 1..n {
        let last = basis.last().unwrap();
        let mut v = g * last;
        let mut phi = *at_one.last().unwrap();
        let scale = ip(&v, &v).max(0.0).sqrt().max(g_norm);
        for _ in 0..2 {
            for (q, &pq) in basis.iter().zip(&at_one) {
                let h = ip(q, &v);
                v.axpy(-h, q, 1.0);
                phi -= h * pq;
            }
        }
        let nv = ip(&v, &v).max(0.0).sqrt();
        if !(nv > 1e-12 * scale) {
            return Ok(PolynomialResidual {
                value: 0.0,
                degenerate: true,
            });
        }
        basis.push(v / nv);
        at_one.push(phi / nv);
    }
    let phi_norm = at_one.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(PolynomialResidual {
        value: 1.0 / phi_norm,
        degenerate: false,
    })
}

/// `‖I − (G − I)P‖₂` for the configured method's dense preconditioner on
/// the given history.
pub fn amplification_factor(
    problem: &LinearFixedPoint,
    history: &IterateHistory,
    config: &MethodConfig,
) -> Result<f64> {
    let d = problem.dim();
    if d > DENSE_CAP {
        return Err(Error::DenseCap {
            dim: d,
            cap: DENSE_CAP,
        });
    }
    let p = dense_preconditioner(history, config, problem)?;
    Ok(amplification_of(&problem.dense_g(), &p))
}

/// `‖I − (G − I)P‖₂` for explicit matrices.
pub fn amplification_of(g: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let d = g.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    linalg::spectral_norm(&(&eye - (g - &eye) * p))
}

/// GMRES iterate after `N − 1` Arnoldi steps: the minimizer of
/// `‖g(x) − x‖₂` over `x₀ + span{r₀, Gr₀, …, G^{N−2}r₀}`. `N = 1` returns `x₀`.
pub fn reference_gmres(problem: &LinearFixedPoint, x0: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    check_dim(problem.dim(), x0.len())?;
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let r0 = problem.residual(x0)?;
    let beta = r0.norm();
    if n == 1 || beta == 0.0 {
        return Ok(x0.clone());
    }
    let steps = n - 1;
    let mut v = vec![&r0 / beta];
    let mut h = DMatrix::<f64>::zeros(steps + 1, steps);
    let mut k = 0;
    while k < steps {
        // the residual map is affine with linear part G − I
        let mut w = problem.apply_g_minus_i(&v[k])?;
        let scale = w.norm();
        for _ in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let c = vi.dot(&w);
                h[(i, k)] += c;
                w.axpy(-c, vi, 1.0);
            }
        }
        let nw = w.norm();
        h[(k + 1, k)] = nw;
        k += 1;
        if !(nw > 1e-14 * scale) {
            break;
        }
        v.push(w / nw);
    }
    // r(x₀ + V_k y) = V_{k+1}(βe₁ + H̄ y)
    let hbar = h.view((0, 0), (k + 1, k)).into_owned();
    let mut rhs = DVector::zeros(k + 1);
    rhs[0] = -beta;
    let y = hbar
        .svd(true, true)
        .solve(&rhs, f64::EPSILON)
        .map_err(|e| Error::InvalidInput(e.into()))?;
    let mut x = x0.clone();
    for (i, &yi) in y.iter().enumerate() {
        x.axpy(yi, &v[i], 1.0);
    }
    Ok(x)
}

/// `N` steps of textbook conjugate gradient on `(I − G)x = (I − G)x*`,
/// whose residual is `g(x) − x`. Stops early on exact convergence.
pub fn reference_cg(problem: &LinearFixedPoint, x0: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    check_dim(problem.dim(), x0.len())?;
    let mut x = x0.clone();
    let mut r = problem.residual(x0)?;
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..n {
        if rr == 0.0 {
            break;
        }
        let ap = -problem.apply_g_minus_i(&p)?;
        let curv = p.dot(&ap);
        if !(curv > 0.0) {
            break;
        }
        let alpha = rr / curv;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    Ok(x)
}

/// One instance of the bound chain
/// `observed ≤ amplification·optimal ≤ amplification·chebyshev·‖r₁‖_W`.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub n: usize,
    pub xi: f64,
    pub chebyshev_factor: f64,
    pub amplification: f64,
    pub r1_w: f64,
    pub optimal: PolynomialResidual,
    /// `amplification · chebyshev_factor · ‖r₁‖_W`
    pub bound: f64,
    /// `‖g(y) − y‖_W` at the extrapolated point.
    pub observed: f64,
    /// First-order rounding error of `observed`: `ε‖W^{1/2}(G−I)‖₂` times
    /// the 1-norm-weighted column sizes combined into `y`.
    pub rounding_floor: f64,
}

impl BoundReport {
    /// Both inequalities of the chain with relative slack `rel` plus an
    /// absolute floor `abs`; the first one also allows
    /// [`rounding_floor`](Self::rounding_floor).
    pub fn holds(&self, rel: f64, abs: f64) -> bool {
        let mid = self.amplification * self.optimal.value;
        self.observed <= mid * (1.0 + rel) + abs + self.rounding_floor
            && mid <= self.bound * (1.0 + rel) + abs
    }
}

/// Offline extrapolation from the first `n` columns of a baseline history,
/// measured against the bound chain in the method's own norm.
pub fn offline_bound_report(
    problem: &LinearFixedPoint,
    baseline: &IterateHistory,
    n: usize,
    config: &MethodConfig,
) -> Result<BoundReport> {
    let kappa = problem
        .kappa()
        .ok_or_else(|| Error::InvalidInput("bound needs a problem with known kappa".into()))?;
    let prefix = baseline.prefix(n)?;
    let plain = MethodConfig {
        line_search: false,
        ..config.clone()
    };
    let step = gna_step_detailed(&prefix, &plain, problem)?;
    let g = problem.dense_g();
    let w = dense_weight(&g, &plain.weight_spec())?;
    let wnorm = |v: &DVector<f64>| v.dot(&(&w * v)).max(0.0).sqrt();
    let r1 = prefix.r_col(0).clone();
    let r1_w = wnorm(&r1);
    let observed = wnorm(&problem.residual(&step.y)?);
    let largest = |cols: &mut dyn Iterator<Item = &DVector<f64>>| cols.map(|c| c.norm()).fold(0.0, f64::max);
    let weights = &step.weights;
    let size = weights.y_coefficients().lp_norm(1) * largest(&mut prefix.y_cols())
        + weights.beta.abs() * weights.r_weights.lp_norm(1) * largest(&mut prefix.r_cols());
    let eye = DMatrix::<f64>::identity(g.nrows(), g.nrows());
    let gmi = &g - &eye;
    let operator = (&gmi * &w * &gmi).symmetric_eigen().eigenvalues.amax().sqrt();
    let rounding_floor = f64::EPSILON * operator * size;
    let optimal = optimal_polynomial_residual(&g, &r1, n, &w)?;
    let amplification = amplification_factor(problem, &prefix, &plain.clone())?;
    let cheb = chebyshev_factor(kappa, n)?;
    Ok(BoundReport {
        n,
        xi: chebyshev_xi(kappa)?,
        chebyshev_factor: cheb,
        amplification,
        r1_w,
        optimal,
        bound: amplification * cheb * r1_w,
        observed,
        rounding_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{make_random_spd_problem, make_spd_problem_with_spectrum};
    use crate::gamma::{solve_gamma, WeightSpec};
    use crate::linalg::random_vector;
    use crate::methods::MethodKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chebyshev_values() {
        assert!((chebyshev_factor(0.25, 2).unwrap() - 0.3).abs() < 1e-15);
        assert!((chebyshev_factor(1e-3, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(chebyshev_factor(1.0 - 1e-15, 3).unwrap() < 1e-14);
        assert!(chebyshev_factor(0.0, 2).is_err());
        assert!(chebyshev_factor(1.0, 2).is_err());
    }

    #[test]
    fn optimal_polynomial_trivial_cases() {
        let p = make_random_spd_problem(8, 0.1, 1).unwrap();
        let g = p.dense_g();
        let w = DMatrix::identity(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r1 = random_vector(8, &mut rng);
        let one = optimal_polynomial_residual(&g, &r1, 1, &w).unwrap();
        assert!((one.value - r1.norm()).abs() < 1e-14 * r1.norm());
        let eig = g.clone().symmetric_eigen();
        let v = eig.eigenvectors.column(3).into_owned();
        let two = optimal_polynomial_residual(&g, &v, 2, &w).unwrap();
        assert!(two.degenerate && two.value == 0.0);
    }

    #[test]
    fn optimal_matches_anderson_on_baseline() {
        let p = make_random_spd_problem(15, 0.01, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut y = random_vector(15, &mut rng);
        let mut h = IterateHistory::new(15, None).unwrap();
        for _ in 0..6 {
            let x = p.apply(&y).unwrap();
            h.push(y.clone(), x.clone()).unwrap();
            y = x;
        }
        let g = p.dense_g();
        for spec in [WeightSpec::Identity, WeightSpec::InverseOfGminusI] {
            let w = dense_weight(&g, &spec).unwrap();
            let gamma = solve_gamma(&h, &spec, 0.0).unwrap().gamma;
            let rg = h.combine_r(&gamma);
            let observed = rg.dot(&(&w * &rg)).sqrt();
            let opt = optimal_polynomial_residual(&g, h.r_col(0), 6, &w).unwrap().value;
            assert!(
                (observed - opt).abs() < 1e-8 * opt,
                "{spec:?}: {observed} vs {opt}"
            );
        }
    }

    #[test]
    fn amplification_special_cases() {
        let p = make_random_spd_problem(10, 0.1, 5).unwrap();
        let g = p.dense_g();
        let eye = DMatrix::<f64>::identity(10, 10);
        assert!((amplification_of(&g, &DMatrix::zeros(10, 10)) - 1.0).abs() < 1e-14);
        let exact = linalg::checked_inverse(&(&g - &eye)).unwrap().0;
        assert!(amplification_of(&g, &exact) < 1e-12);
        let beta = -0.8;
        let expected = g
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| (1.0 - beta * (l - 1.0)).abs())
            .fold(0.0, f64::max);
        assert!((amplification_of(&g, &(&eye * beta)) - expected).abs() < 1e-12);
    }

    #[test]
    fn gmres_first_iterate() {
        let p = make_random_spd_problem(6, 0.1, 6).unwrap();
        let x0 = DVector::from_element(6, 1.0);
        assert_eq!(reference_gmres(&p, &x0, 1).unwrap(), x0);
    }

    #[test]
    fn oracles_terminate() {
        let p = make_random_spd_problem(10, 0.05, 7).unwrap();
        let x0 = DVector::zeros(10);
        let xs = p.x_star().unwrap();
        assert!((reference_gmres(&p, &x0, 11).unwrap() - xs).norm() < 1e-8 * xs.norm());
        assert!((reference_cg(&p, &x0, 10).unwrap() - xs).norm() < 1e-8 * xs.norm());
    }

    #[test]
    fn chebyshev_tight_on_extremal_spectrum() {
        // eigenvalues at the Chebyshev extrema mapped to [0, 1 − κ]
        let kappa = 0.05;
        let n = 6;
        let eigs: Vec<f64> = (0..n)
            .map(|k| {
                let t = (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
                0.5 * (1.0 - kappa) * (1.0 + t)
            })
            .collect();
        let p = make_spd_problem_with_spectrum(&eigs, 8).unwrap();
        let g = p.dense_g();
        let eig = g.clone().symmetric_eigen();
        let r1 = eig.eigenvectors.column_sum();
        let w = DMatrix::identity(n, n);
        let opt = optimal_polynomial_residual(&g, &r1, n, &w).unwrap().value / r1.norm();
        let cheb = chebyshev_factor(kappa, n).unwrap();
        assert!(opt <= 2.0 * cheb && cheb <= 2.0 * opt, "{opt} vs {cheb}");
    }

    #[test]
    fn bound_report_anderson() {
        let p = make_random_spd_problem(12, 0.01, 9).unwrap();
        let (_, h) = crate::driver::run_baseline(&p, &DVector::zeros(12), 8).unwrap();
        let cfg = MethodConfig::new(MethodKind::Anderson, -1.0).unwrap();
        for n in 2..=8 {
            let rep = offline_bound_report(&p, &h, n, &cfg).unwrap();
            assert!(rep.holds(1e-9, 1e-14 * rep.r1_w), "{rep:?}");
        }
    }
}
