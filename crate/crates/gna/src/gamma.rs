//! Combination coefficients `γ_W = M⁻¹1 / (1ᵀM⁻¹1)` for the weight families
//! used by the acceleration methods.
//!
//! Each [`WeightSpec`] maps to a Gram recipe computable from `Y` and `R`
//! alone; no weight involving `(G − I)⁻¹` is ever formed:
//!
//! | spec                   | Gram `M`               |
//! |------------------------|------------------------|
//! | `Identity`             | `RᵀR`                  |
//! | `InverseOfGminusI`     | `YᵀR`                  |
//! | `Mixed(W₁, W₂)`        | `YᵀW₁R + RᵀW₂R`        |
//! | `ShiftedInverse(β)`    | `YᵀR − βRᵀR`           |
//!
//! The solvers never form `M` itself. `γ` is the unique affine combination
//! with `Mγ ∈ span(1)`, i.e. `CᵀMγ = 0` for the difference matrix `C`.
//! Writing `γ = e_N + Cz` turns this into the `(N − 1)`-dimensional system
//!
//! `CᵀMC z = −CᵀM e_N`,
//!
//! whose entries are products of differences such as `(YC)ᵀR` and
//! `(YC)ᵀRC`. These are invariant under translating the iterates, so the
//! rank-one ambiguity of `YᵀR` disappears, an iterate at the origin is
//! harmless and nothing cancels when `‖x*‖` is large. With a single
//! column `γ = [1]` whatever the Gram.
//!
//! Regularization adds `μI` to `M`, which becomes `μCᵀC` on the reduced
//! system (plus `μe_{N−1}` on the right-hand side), with
//! `μ = reg·‖CᵀMC‖_F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::history::{apply_difference, IterateHistory};
use crate::linalg::{self, ones};

/// A linear operator used inside a mixed weight.
#[derive(Clone, Debug)]
pub enum Operator {
    Zero,
    Identity,
    Dense(DMatrix<f64>),
}

impl Operator {
    fn is_zero(&self) -> bool {
        matches!(self, Operator::Zero)
    }
}

/// Which quadratic form `‖·‖_W` the coefficients minimize.
#[derive(Clone, Debug)]
pub enum WeightSpec {
    /// `W = I`
    Identity,
    /// `W = (G − I)⁻¹`
    InverseOfGminusI,
    /// `W = (G − I)⁻¹W₁ + W₂`
    Mixed { w1: Operator, w2: Operator },
    /// `W = (G − I)⁻¹ − βI`
    ShiftedInverse { beta: f64 },
}

impl WeightSpec {
    pub fn name(&self) -> String {
        match self {
            WeightSpec::Identity => "I".into(),
            WeightSpec::InverseOfGminusI => "(G-I)^-1".into(),
            WeightSpec::Mixed { .. } => "(G-I)^-1 W1 + W2".into(),
            WeightSpec::ShiftedInverse { beta } if *beta < 0.0 => format!("(G-I)^-1 + {}*I", -beta),
            WeightSpec::ShiftedInverse { beta } => format!("(G-I)^-1 - {beta}*I"),
        }
    }

    /// Full Gram matrix `M` from the recipe table, formed from raw columns.
    ///
    /// Only meant for inspection and oracles; the solvers use
    /// [`reduced_system`](Self::reduced_system).
    pub fn gram(&self, history: &IterateHistory) -> Result<DMatrix<f64>> {
        let (y, r) = (history.y_matrix(), history.r_matrix());
        let yr = || y.transpose() * &r;
        let rr = || r.transpose() * &r;
        Ok(match self {
            WeightSpec::Identity => rr(),
            WeightSpec::InverseOfGminusI => yr(),
            WeightSpec::ShiftedInverse { beta } => yr() - rr() * *beta,
            WeightSpec::Mixed { w1, w2 } => {
                let w1 = dense_operator(w1, history.dim())?;
                let w2 = dense_operator(w2, history.dim())?;
                y.transpose() * (w1 * &r) + r.transpose() * (w2 * &r)
            }
        })
    }

    /// `(CᵀMC, CᵀM e_N)` for the current history, from cached difference
    /// products. Both are empty when `N = 1`.
    pub fn reduced_system(&self, history: &IterateHistory) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = history.len();
        if n == 0 {
            return Err(Error::InsufficientHistory { needed: 1, have: 0 });
        }
        let last = n - 1;
        let pick = |k: &DMatrix<f64>, p: &DMatrix<f64>| (k.clone(), p.column(last).into_owned());
        Ok(match self {
            WeightSpec::Identity => pick(history.rc_rc(), history.rc_r()),
            WeightSpec::InverseOfGminusI => pick(history.yc_rc(), history.yc_r()),
            WeightSpec::ShiftedInverse { beta } => (
                history.yc_rc() - history.rc_rc() * *beta,
                (history.yc_r().column(last) - history.rc_r().column(last) * *beta),
            ),
            WeightSpec::Mixed { w1, w2 } => {
                let mut k = DMatrix::zeros(n - 1, n - 1);
                let mut q = DVector::zeros(n - 1);
                for (w, left_is_y) in [(w1, true), (w2, false)] {
                    match w {
                        Operator::Zero => {}
                        Operator::Identity if left_is_y => {
                            k += history.yc_rc();
                            q += history.yc_r().column(last);
                        }
                        Operator::Identity => {
                            k += history.rc_rc();
                            q += history.rc_r().column(last);
                        }
                        Operator::Dense(_) => {
                            let wm = dense_operator(w, history.dim())?;
                            let left = if left_is_y {
                                history.yc_matrix()
                            } else {
                                history.rc_matrix()
                            };
                            let lw = left.transpose() * wm;
                            k += &lw * history.rc_matrix();
                            q += &lw * history.r_col(last);
                        }
                    }
                }
                (k, q)
            }
        })
    }
}

impl WeightSpec {
    /// Test matrix `V` with `CᵀMC = Vᵀ RC` and `CᵀMe_N = Vᵀ r_N`, formed from
    /// the raw columns.
    pub fn test_matrix(&self, history: &IterateHistory) -> Result<DMatrix<f64>> {
        let d = history.dim();
        Ok(match self {
            WeightSpec::Identity => history.rc_matrix(),
            WeightSpec::InverseOfGminusI => history.yc_matrix(),
            WeightSpec::ShiftedInverse { beta } => history.yc_matrix() - history.rc_matrix() * *beta,
            WeightSpec::Mixed { w1, w2 } => {
                let mut v = DMatrix::zeros(d, history.len().saturating_sub(1));
                if !w1.is_zero() {
                    v += dense_operator(w1, d)?.transpose() * history.yc_matrix();
                }
                if !w2.is_zero() {
                    v += dense_operator(w2, d)?.transpose() * history.rc_matrix();
                }
                v
            }
        })
    }
}

fn dense_operator(op: &Operator, d: usize) -> Result<DMatrix<f64>> {
    Ok(match op {
        Operator::Zero => DMatrix::zeros(d, d),
        Operator::Identity => DMatrix::identity(d, d),
        Operator::Dense(m) => {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: if m.nrows() != d { m.nrows() } else { m.ncols() },
                });
            }
            m.clone()
        }
    })
}

/// Dense matrix of the quadratic form behind `spec` for a dense `G`, with its
/// global sign flipped so the form is positive semidefinite.
///
/// The coefficients only depend on `W` up to a global sign, so
/// `(G − I)⁻¹` is reported as `(I − G)⁻¹` and `(G − I)⁻¹ − βI` as
/// `(I − G)⁻¹ + βI`. Used for instrumentation and oracles only.
pub fn dense_weight(g: &DMatrix<f64>, spec: &WeightSpec) -> Result<DMatrix<f64>> {
    let d = g.nrows();
    if g.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: g.ncols(),
        });
    }
    let eye = DMatrix::<f64>::identity(d, d);
    let inv_gmi = || {
        linalg::checked_inverse(&(g - &eye))
            .map(|(inv, _)| inv)
            .ok_or_else(|| Error::InvalidInput("G − I is singular".into()))
    };
    let raw = match spec {
        WeightSpec::Identity => return Ok(eye),
        WeightSpec::InverseOfGminusI => inv_gmi()?,
        WeightSpec::ShiftedInverse { beta } => inv_gmi()? - &eye * *beta,
        WeightSpec::Mixed { w1, w2 } => {
            let mut w = dense_operator(w2, d)?;
            if !w1.is_zero() {
                w += inv_gmi()? * dense_operator(w1, d)?;
            }
            w
        }
    };
    let w = linalg::symmetrize(&raw);
    Ok(if w.trace() < 0.0 { -w } else { w })
}

/// Solution of the constrained problem `min ‖Rγ‖_W s.t. 1ᵀγ = 1`.
#[derive(Clone, Debug)]
pub struct GammaCoefficients {
    pub gamma: DVector<f64>,
    /// 1-norm condition estimate of the (equilibrated, regularized) system
    /// actually solved.
    pub gram_condition_estimate: f64,
}

/// Solves for `γ_W` from scratch.
///
/// With `reg > 0` the Gram is shifted by `μI`; a system that stays
/// numerically singular is then handled by an SVD pseudo-solve.
///
/// Without regularization, a reduced system whose condition estimate exceeds
/// [`GRAM_COND_LIMIT`](linalg::GRAM_COND_LIMIT) is re-solved from the raw
/// columns by [`projected_gamma`], which squares the condition number less.
pub fn solve_gamma(history: &IterateHistory, spec: &WeightSpec, reg: f64) -> Result<GammaCoefficients> {
    check_reg(reg)?;
    let (k, q) = spec.reduced_system(history)?;
    let fast = solve_reduced(&k, &q, reg, &spec.name());
    if reg > 0.0 {
        return fast;
    }
    match fast {
        Ok(g) if gram_is_reliable(history, g.gram_condition_estimate) => Ok(g),
        Ok(g) => Ok(projected_gamma(history, spec).unwrap_or(g)),
        Err(e @ Error::SingularGram { .. }) => projected_gamma(history, spec).map_err(|_| e),
        Err(e) => Err(e),
    }
}

/// Condition estimate, of the better conditioned of the two solve paths,
/// beyond which an unregularized online run treats the solve as a numerical
/// breakdown and restarts; roughly `1/√ε`, past which half the digits are lost.
pub const BREAKDOWN_COND: f64 = 1e8;

/// Ratio `‖r_N‖² / ‖RC‖²_F` below which cached products no longer resolve
/// the latest residual: their rounding error, of order `ε‖RC‖²`, then
/// exceeds `10⁻¹⁰` of the objective.
pub const GRAM_RESOLUTION: f64 = 1e-6;

/// Whether a solve through cached difference products can be trusted: the
/// system is not too badly conditioned and the latest residual is not
/// drowned by the rounding error of the products.
pub fn gram_is_reliable(history: &IterateHistory, condition: f64) -> bool {
    let n = history.len();
    if n < 2 {
        return true;
    }
    let last = history.gram_rr()[(n - 1, n - 1)];
    condition <= linalg::GRAM_COND_LIMIT && last >= GRAM_RESOLUTION * history.rc_rc().trace()
}

/// `γ_W` from the Petrov–Galerkin form `Vᵀ(RC z + r_N) = 0` of the reduced
/// system, solved on an orthonormal basis of the test space `V`. Costs
/// `O(dN²)`.
pub fn projected_gamma(history: &IterateHistory, spec: &WeightSpec) -> Result<GammaCoefficients> {
    let n = history.len();
    if n == 0 {
        return Err(Error::InsufficientHistory { needed: 1, have: 0 });
    }
    if n == 1 {
        return Ok(GammaCoefficients {
            gamma: DVector::from_element(1, 1.0),
            gram_condition_estimate: 1.0,
        });
    }
    let test = spec.test_matrix(history)?;
    let rhs = -history.r_col(n - 1);
    let (z, cond) = linalg::projected_solve(&test, &history.rc_matrix(), &rhs)
        .ok_or_else(|| Error::SingularGram { spec: spec.name() })?;
    Ok(GammaCoefficients {
        gamma: gamma_from_z(&z),
        gram_condition_estimate: cond,
    })
}

/// `γ = M⁻¹1 / (1ᵀM⁻¹1)` for an explicit Gram `M`, shifted by `reg·‖M‖_F·I`.
///
/// Distinguishes a singular `M` from a nonsingular one with `1ᵀM⁻¹1 = 0`.
/// `label` names the weight in errors.
pub fn solve_gamma_from_gram(gram: &DMatrix<f64>, reg: f64, label: &str) -> Result<GammaCoefficients> {
    let n = gram.nrows();
    if n == 0 || gram.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "Gram must be square and non-empty, got {}x{}",
            n,
            gram.ncols()
        )));
    }
    check_reg(reg)?;
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularGram { spec: label.into() });
    }
    if n == 1 {
        return Ok(GammaCoefficients {
            gamma: DVector::from_element(1, 1.0),
            gram_condition_estimate: 1.0,
        });
    }
    let mut m = gram.clone();
    let shift = reg * gram.norm();
    for i in 0..n {
        m[(i, i)] += shift;
    }
    let (scaled, scale) = equilibrate(&m);
    let rhs = ones(n).component_div(&scale);
    let (zs, cond) = match linalg::checked_inverse(&scaled) {
        Some((inv, cond)) => (inv * rhs, cond),
        None if reg > 0.0 => (pseudo_inverse(&scaled, label)? * rhs, f64::INFINITY),
        None => return Err(Error::SingularGram { spec: label.into() }),
    };
    let z = zs.component_div(&scale);
    let s = z.sum();
    let size = z.iter().map(|v| v.abs()).sum::<f64>();
    if !s.is_finite() || s.abs() <= 1e3 * f64::EPSILON * size {
        return Err(Error::DegenerateNormalization { spec: label.into() });
    }
    Ok(GammaCoefficients {
        gamma: z / s,
        gram_condition_estimate: cond,
    })
}

fn check_reg(reg: f64) -> Result<()> {
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "regularization must be nonnegative, got {reg}"
        )));
    }
    Ok(())
}

/// Jacobi scaling `S⁻¹AS⁻¹` with `S = diag(√|a_ii|)`, and `S`.
fn equilibrate(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let scale = DVector::from_fn(n, |i, _| {
        let d = a[(i, i)].abs().sqrt();
        if d > 0.0 && d.is_finite() {
            d
        } else {
            1.0
        }
    });
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (scale[i] * scale[j]));
    (scaled, scale)
}

/// `tridiag(−1, 2, −1)`, i.e. `CᵀC`.
fn difference_gram(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// Right-hand side `−q + μe_{N−1}` of the regularized reduced system.
fn reduced_rhs(q: &DVector<f64>, shift: f64) -> DVector<f64> {
    let mut b = -q;
    if let Some(last) = b.len().checked_sub(1) {
        b[last] += shift;
    }
    b
}

fn gamma_from_z(z: &DVector<f64>) -> DVector<f64> {
    let mut gamma = apply_difference(z);
    let last = gamma.len() - 1;
    gamma[last] += 1.0;
    gamma
}

/// `γ` from a reduced system `(K, q) = (CᵀMC, CᵀMe_N)` built by the caller,
/// regularized with `μ = reg·‖K‖_F`; `label` names the weight in errors.
pub fn solve_reduced(k: &DMatrix<f64>, q: &DVector<f64>, reg: f64, label: &str) -> Result<GammaCoefficients> {
    check_reg(reg)?;
    if k.nrows() != k.ncols() || q.len() != k.nrows() {
        return Err(Error::DimensionMismatch {
            expected: k.nrows(),
            got: q.len(),
        });
    }
    solve_reduced_shifted(k, q, reg * k.norm(), label)
}

/// Solves `(K + μCᵀC) z = −q + μe_{N−1}` and returns `γ = e_N + Cz`.
///
/// Falls back to an SVD pseudo-solve when `μ > 0` and the system is still
/// numerically singular.
fn solve_reduced_shifted(
    k: &DMatrix<f64>,
    q: &DVector<f64>,
    shift: f64,
    label: &str,
) -> Result<GammaCoefficients> {
    let m = k.nrows();
    if m == 0 {
        return Ok(GammaCoefficients {
            gamma: DVector::from_element(1, 1.0),
            gram_condition_estimate: 1.0,
        });
    }
    if k.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularGram { spec: label.into() });
    }
    let a = k + difference_gram(m) * shift;
    let b = reduced_rhs(q, shift);
    let (scaled, scale) = equilibrate(&a);
    let rhs = b.component_div(&scale);
    let (zs, cond) = match linalg::checked_inverse(&scaled) {
        Some((inv, cond)) => (inv * rhs, cond),
        None if shift > 0.0 => (pseudo_inverse(&scaled, label)? * rhs, f64::INFINITY),
        None => return Err(Error::SingularGram { spec: label.into() }),
    };
    Ok(GammaCoefficients {
        gamma: gamma_from_z(&zs.component_div(&scale)),
        gram_condition_estimate: cond,
    })
}

fn pseudo_inverse(a: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularGram { spec: label.into() });
    }
    let svd = a.clone().svd(true, true);
    let tol = f64::EPSILON * svd.singular_values.max() * a.nrows() as f64;
    svd.pseudo_inverse(tol)
        .map_err(|_| Error::SingularGram { spec: label.into() })
}

/// Relative residual above which an incrementally maintained inverse is
/// discarded and refactorized.
pub const INCREMENTAL_CHECK_TOL: f64 = 1e-12;

/// Incrementally maintained solve for `γ_W` over a sliding history.
///
/// Keeps the inverse of the reduced matrix `A = CᵀMC + μCᵀC`. A push
/// appends one row and column to `A`, absorbed through the bordering
/// (Schur complement) form of the Woodbury identity in `O(N²)`; an eviction
/// drops the first row and column with the matching `O(N²)` downdate.
/// After every update the solve is checked through
/// `‖Az − b‖∞ / (‖A‖∞‖z‖∞ + ‖b‖∞)`; failures trigger a rebuild from
/// scratch, counted in [`refactorizations`](Self::refactorizations).
///
/// With `reg > 0` the shift `μ = reg·‖CᵀMC‖_F` is frozen between rebuilds
/// and refreshed when the current value drifts by more than a factor of two.
#[derive(Clone, Debug)]
pub struct IncrementalGamma {
    spec: WeightSpec,
    reg: f64,
    k: DMatrix<f64>,
    q: DVector<f64>,
    inv: DMatrix<f64>,
    shift: f64,
    columns: usize,
    refactorizations: usize,
}

impl IncrementalGamma {
    pub fn new(spec: WeightSpec, reg: f64) -> Result<Self> {
        check_reg(reg)?;
        Ok(Self {
            spec,
            reg,
            k: DMatrix::zeros(0, 0),
            q: DVector::zeros(0),
            inv: DMatrix::zeros(0, 0),
            shift: 0.0,
            columns: 0,
            refactorizations: 0,
        })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    /// Number of history columns the state describes.
    pub fn len(&self) -> usize {
        self.columns
    }

    pub fn is_empty(&self) -> bool {
        self.columns == 0
    }

    pub fn refactorizations(&self) -> usize {
        self.refactorizations
    }

    pub fn clear(&mut self) {
        self.k = DMatrix::zeros(0, 0);
        self.q = DVector::zeros(0);
        self.inv = DMatrix::zeros(0, 0);
        self.shift = 0.0;
        self.columns = 0;
    }

    /// Brings the state in line with `history` after one push; `evicted`
    /// reports whether that push dropped the oldest column.
    pub fn update(&mut self, history: &IterateHistory, evicted: bool) -> Result<()> {
        let n = history.len();
        let expected = if evicted { self.columns } else { self.columns + 1 };
        if n != expected {
            return Err(Error::InvalidInput(format!(
                "incremental state tracks {} columns but history holds {n}",
                self.columns
            )));
        }
        let (k_full, q) = self.spec.reduced_system(history)?;
        self.q = q;
        self.columns = n;
        let mut consistent = true;
        if evicted && self.k.nrows() > 0 {
            consistent = self.downdate();
        }
        if n >= 2 && consistent {
            consistent = self.border(&k_full);
        }
        self.k = k_full;
        if !consistent || self.shift_is_stale() || !self.solution_is_accurate() {
            match self.rebuild() {
                // left to gamma_for, which can still solve from the raw columns
                Err(Error::SingularGram { .. }) if self.reg == 0.0 => {
                    let m = self.k.nrows();
                    self.inv = DMatrix::from_element(m, m, f64::NAN);
                }
                other => other?,
            }
        }
        Ok(())
    }

    /// Current coefficients.
    pub fn gamma(&self) -> Result<GammaCoefficients> {
        if self.is_empty() {
            return Err(Error::InsufficientHistory { needed: 1, have: 0 });
        }
        let z = &self.inv * reduced_rhs(&self.q, self.shift);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularGram {
                spec: self.spec.name(),
            });
        }
        let cond = linalg::norm1(&self.shifted()) * linalg::norm1(&self.inv);
        Ok(GammaCoefficients {
            gamma: gamma_from_z(&z),
            gram_condition_estimate: if self.k.is_empty() { 1.0 } else { cond },
        })
    }

    /// Current coefficients for `history`, re-solved from the raw columns as
    /// in [`solve_gamma`] when unregularized and badly conditioned.
    pub fn gamma_for(&self, history: &IterateHistory) -> Result<GammaCoefficients> {
        let fast = self.gamma();
        if self.reg > 0.0 {
            return fast;
        }
        match fast {
            Ok(g) if gram_is_reliable(history, g.gram_condition_estimate) => Ok(g),
            Ok(g) => Ok(projected_gamma(history, &self.spec).unwrap_or(g)),
            Err(e @ Error::SingularGram { .. }) => projected_gamma(history, &self.spec).map_err(|_| e),
            Err(e) => Err(e),
        }
    }

    /// Refactorizes from the stored reduced matrix.
    pub fn rebuild(&mut self) -> Result<()> {
        self.refactorizations += 1;
        self.shift = self.reg * self.k.norm();
        let a = self.shifted();
        if a.is_empty() {
            self.inv = DMatrix::zeros(0, 0);
            return Ok(());
        }
        let label = self.spec.name();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularGram { spec: label });
        }
        let (scaled, scale) = equilibrate(&a);
        let inv_scaled = match linalg::checked_inverse(&scaled) {
            Some((inv, _)) => inv,
            None if self.shift > 0.0 => pseudo_inverse(&scaled, &label)?,
            None => return Err(Error::SingularGram { spec: label }),
        };
        let m = a.nrows();
        self.inv = DMatrix::from_fn(m, m, |i, j| inv_scaled[(i, j)] / (scale[i] * scale[j]));
        Ok(())
    }

    fn shifted(&self) -> DMatrix<f64> {
        &self.k + difference_gram(self.k.nrows()) * self.shift
    }

    /// Drops the first row and column of the inverse; `false` if unstable.
    fn downdate(&mut self) -> bool {
        let m = self.inv.nrows();
        if m <= 1 {
            self.inv = DMatrix::zeros(0, 0);
            return true;
        }
        let b11 = self.inv[(0, 0)];
        let b12 = self.inv.view((0, 1), (1, m - 1)).into_owned();
        let b21 = self.inv.view((1, 0), (m - 1, 1)).into_owned();
        let b22 = self.inv.view((1, 1), (m - 1, m - 1)).into_owned();
        if !b11.is_finite() || b11.abs() <= f64::EPSILON * (b12.norm() * b21.norm()).sqrt() {
            return false;
        }
        self.inv = b22 - (b21 * b12) / b11;
        true
    }

    /// Appends the last row and column of `K + μCᵀC`; `false` if unstable.
    fn border(&mut self, k_full: &DMatrix<f64>) -> bool {
        let m = self.inv.nrows();
        if k_full.nrows() != m + 1 {
            return false;
        }
        if m == 0 {
            self.shift = self.reg * k_full.norm();
            let delta = k_full[(0, 0)] + 2.0 * self.shift;
            if !delta.is_finite() || delta == 0.0 {
                return false;
            }
            self.inv = DMatrix::from_element(1, 1, 1.0 / delta);
            return true;
        }
        let mut u = k_full.view((0, m), (m, 1)).into_owned();
        let mut v = k_full.view((m, 0), (1, m)).transpose();
        u[m - 1] -= self.shift;
        v[m - 1] -= self.shift;
        let delta = k_full[(m, m)] + 2.0 * self.shift;
        let bu = &self.inv * &u;
        let vb = v.transpose() * &self.inv;
        let schur = delta - v.dot(&bu);
        let size = delta.abs() + v.norm() * bu.norm();
        if !schur.is_finite() || schur.abs() <= f64::EPSILON * size {
            return false;
        }
        let mut inv = DMatrix::zeros(m + 1, m + 1);
        let top_left = &self.inv + (&bu * &vb) / schur;
        inv.view_mut((0, 0), (m, m)).copy_from(&top_left);
        for i in 0..m {
            inv[(i, m)] = -bu[i] / schur;
            inv[(m, i)] = -vb[i] / schur;
        }
        inv[(m, m)] = 1.0 / schur;
        self.inv = inv;
        true
    }

    fn shift_is_stale(&self) -> bool {
        if self.reg == 0.0 {
            return false;
        }
        let target = self.reg * self.k.norm();
        if self.shift == 0.0 {
            return target > 0.0;
        }
        !(0.5..=2.0).contains(&(target / self.shift))
    }

    fn solution_is_accurate(&self) -> bool {
        if self.k.is_empty() {
            return true;
        }
        let a = self.shifted();
        let b = reduced_rhs(&self.q, self.shift);
        let z = &self.inv * &b;
        let res = (&a * &z - &b).amax();
        let inf_norm = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let scale = inf_norm(&a) * z.amax() + b.amax();
        res.is_finite() && res <= INCREMENTAL_CHECK_TOL * scale
    }
}
