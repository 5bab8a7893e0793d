//! Named `(W, P)` instantiations of the extrapolation step `y = (Y − PR)γ_W`
//! and dense multi-secant constructors used to verify them.
//!
//! In the step path `P` is applied in factored form: every method's output
//! is assembled as
//!
//! ```text
//! y = Y(a₀ + β a₁) − β R b,    1ᵀa₀ = 1,  1ᵀa₁ = 0
//! ```
//!
//! from `N`-vectors computed on cached Gram matrices ([`StepWeights`]), so
//! no `d × d` matrix is ever formed. Dense constructors are capped at
//! [`DENSE_CAP`] and exist for testing.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::LinearFixedPoint;
use crate::gamma::{gram_is_reliable, solve_gamma, solve_reduced, GammaCoefficients, WeightSpec};
use crate::history::{apply_difference, difference_matrix, IterateHistory};
use crate::linalg::{self, ones};

/// Largest dimension accepted by the dense verification constructors.
pub const DENSE_CAP: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Anderson,
    /// Good Anderson, equivalently multi-secant Broyden Type-I.
    BroydenI,
    BroydenII,
    Dfp,
    Bfgs,
    Srk,
    Gmres,
    Cg,
}

impl MethodKind {
    pub const ALL: [MethodKind; 8] = [
        MethodKind::Anderson,
        MethodKind::BroydenI,
        MethodKind::BroydenII,
        MethodKind::Dfp,
        MethodKind::Bfgs,
        MethodKind::Srk,
        MethodKind::Gmres,
        MethodKind::Cg,
    ];

    /// Kinds whose step carries a mixing parameter `β ≠ 0`.
    pub const BETA_KINDS: [MethodKind; 6] = [
        MethodKind::Anderson,
        MethodKind::BroydenI,
        MethodKind::BroydenII,
        MethodKind::Dfp,
        MethodKind::Bfgs,
        MethodKind::Srk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Anderson => "anderson",
            MethodKind::BroydenI => "broyden1",
            MethodKind::BroydenII => "broyden2",
            MethodKind::Dfp => "dfp",
            MethodKind::Bfgs => "bfgs",
            MethodKind::Srk => "srk",
            MethodKind::Gmres => "gmres",
            MethodKind::Cg => "cg",
        }
    }

    /// Weight whose `γ_W` the method uses.
    pub fn weight_spec(self, beta: f64) -> WeightSpec {
        match self {
            MethodKind::Anderson
            | MethodKind::BroydenII
            | MethodKind::Dfp
            | MethodKind::Gmres
            | MethodKind::Cg => WeightSpec::Identity,
            MethodKind::BroydenI | MethodKind::Bfgs => WeightSpec::InverseOfGminusI,
            MethodKind::Srk => WeightSpec::ShiftedInverse { beta },
        }
    }

    pub fn uses_beta(self) -> bool {
        self != MethodKind::Gmres
    }

    /// GMRES has `P = 0`, so injecting its output stalls the iteration.
    pub fn supports_online(self) -> bool {
        self != MethodKind::Gmres
    }

    /// The dense multi-secant matrix whose generalized quasi-Newton step
    /// reproduces this method, if any.
    pub fn multisecant(self) -> Option<MultisecantKind> {
        match self {
            MethodKind::Anderson | MethodKind::BroydenII => Some(MultisecantKind::BroydenII),
            MethodKind::BroydenI => Some(MultisecantKind::BroydenI),
            MethodKind::Dfp => Some(MultisecantKind::Dfp),
            MethodKind::Bfgs => Some(MultisecantKind::Bfgs),
            MethodKind::Srk => Some(MultisecantKind::Srk),
            MethodKind::Gmres | MethodKind::Cg => None,
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "anderson" => MethodKind::Anderson,
            "broyden1" | "broydeni" | "good-anderson" => MethodKind::BroydenI,
            "broyden2" | "broydenii" => MethodKind::BroydenII,
            "dfp" => MethodKind::Dfp,
            "bfgs" => MethodKind::Bfgs,
            "srk" | "sr-k" => MethodKind::Srk,
            "gmres" => MethodKind::Gmres,
            "cg" => MethodKind::Cg,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }
}

/// A method together with its mixing parameter `β` (also the
/// initialization `H₀ = βI`), line-search flag and Gram regularization.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodConfig {
    pub kind: MethodKind,
    pub beta: f64,
    pub line_search: bool,
    /// Relative Tikhonov shift `λ_reg` added to every Gram solve.
    pub reg: f64,
}

impl MethodConfig {
    pub fn new(kind: MethodKind, beta: f64) -> Result<Self> {
        let config = Self {
            kind,
            beta,
            line_search: false,
            reg: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_line_search(mut self, on: bool) -> Self {
        self.line_search = on;
        self
    }

    pub fn with_reg(mut self, reg: f64) -> Self {
        self.reg = reg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_beta() && (self.beta == 0.0 || !self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "{} needs a finite nonzero beta, got {}",
                self.kind, self.beta
            )));
        }
        if !(self.reg >= 0.0) || !self.reg.is_finite() {
            return Err(Error::Config(format!(
                "regularization must be nonnegative, got {}",
                self.reg
            )));
        }
        Ok(())
    }

    pub fn weight_spec(&self) -> WeightSpec {
        self.kind.weight_spec(self.beta)
    }

    /// Short label such as `bfgs` or `anderson_ls`.
    pub fn label(&self) -> String {
        if self.line_search {
            format!("{}_ls", self.kind)
        } else {
            self.kind.to_string()
        }
    }
}

/// Factored form of one extrapolation step:
/// `y = Y(y_base + β·y_beta) − β·R·r_weights`.
#[derive(Clone, Debug)]
pub struct StepWeights {
    /// Sums to one.
    pub y_base: DVector<f64>,
    /// Sums to zero.
    pub y_beta: DVector<f64>,
    pub r_weights: DVector<f64>,
    pub beta: f64,
    /// `γ_W` of the method's weight.
    pub gamma: GammaCoefficients,
}

impl StepWeights {
    /// Coefficients of `Y` in the assembled step.
    pub fn y_coefficients(&self) -> DVector<f64> {
        &self.y_base + &self.y_beta * self.beta
    }

    pub fn assemble(&self, history: &IterateHistory) -> DVector<f64> {
        history.combine_y(&self.y_coefficients()) - history.combine_r(&self.r_weights) * self.beta
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
}

/// An extrapolated point with its factored weights and the number of extra
/// `(G − I)` applications spent computing it.
#[derive(Clone, Debug)]
pub struct Step {
    pub y: DVector<f64>,
    pub weights: StepWeights,
    pub operator_applications: usize,
}

/// `(Y − PR)γ_W` for the configured method, with line search on `β` when enabled.
pub fn gna_step(
    history: &IterateHistory,
    config: &MethodConfig,
    problem: &LinearFixedPoint,
) -> Result<DVector<f64>> {
    Ok(gna_step_detailed(history, config, problem)?.y)
}

/// [`gna_step`] solving `γ_W` from scratch and reporting its factored form.
pub fn gna_step_detailed(
    history: &IterateHistory,
    config: &MethodConfig,
    problem: &LinearFixedPoint,
) -> Result<Step> {
    config.validate()?;
    check_dim(problem.dim(), history.dim())?;
    if history.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, have: 0 });
    }
    let gamma = solve_gamma(history, &config.weight_spec(), config.reg)?;
    step_from_gamma(history, config, problem, gamma)
}

/// Completes a step given precomputed `γ_W` (for example from an
/// incrementally maintained Gram).
pub fn step_from_gamma(
    history: &IterateHistory,
    config: &MethodConfig,
    problem: &LinearFixedPoint,
    gamma: GammaCoefficients,
) -> Result<Step> {
    let (weights, mut ops) = gna_step_weights(history, config, problem, gamma)?;
    let weights = if config.line_search && config.kind != MethodKind::Gmres && config.kind != MethodKind::Cg {
        let (beta, used) = line_search_beta(history, &weights, problem)?;
        ops += used;
        match beta {
            Some(b) => weights.with_beta(b),
            None => weights,
        }
    } else {
        weights
    };
    Ok(Step {
        y: weights.assemble(history),
        weights,
        operator_applications: ops,
    })
}

/// Factored weights for the configured method. Returns the weights and the
/// number of `(G − I)` applications used (CG without cached curvature).
pub fn gna_step_weights(
    history: &IterateHistory,
    config: &MethodConfig,
    problem: &LinearFixedPoint,
    gamma: GammaCoefficients,
) -> Result<(StepWeights, usize)> {
    let n = history.len();
    check_dim(n, gamma.gamma.len())?;
    let g = gamma.gamma.clone();
    let beta = config.beta;
    let plain = |gamma: GammaCoefficients, beta: f64| StepWeights {
        y_base: g.clone(),
        y_beta: DVector::zeros(n),
        r_weights: g.clone(),
        beta,
        gamma,
    };
    let weights = match config.kind {
        MethodKind::Anderson | MethodKind::BroydenI | MethodKind::BroydenII | MethodKind::Srk => {
            plain(gamma, beta)
        }
        MethodKind::Gmres => plain(gamma, 0.0),
        MethodKind::Dfp | MethodKind::Bfgs if n < 2 => plain(gamma, beta),
        MethodKind::Dfp => {
            // y = Yγ − βRγ − YC((YC)ᵀRC)⁻¹(YC)ᵀRγ
            let z = inner_solve(history, &g, config.kind, config.reg)?;
            StepWeights {
                y_base: &g - apply_difference(&z),
                y_beta: DVector::zeros(n),
                r_weights: g.clone(),
                beta,
                gamma,
            }
        }
        MethodKind::Bfgs => {
            // y = Yγ − βRγ + βYC((YC)ᵀRC)⁻¹(RC)ᵀRγ
            let z = inner_solve(history, &g, config.kind, config.reg)?;
            StepWeights {
                y_base: g.clone(),
                y_beta: apply_difference(&z),
                r_weights: g.clone(),
                beta,
                gamma,
            }
        }
        MethodKind::Cg => {
            let (curv, ops) = CurvatureSystem::new(history, problem)?;
            let weights = cg_weights(history, &curv, gamma, config.reg)?;
            return Ok((weights, ops));
        }
    };
    Ok((weights, 0))
}

/// Solves `((YC)ᵀRC) z = Lᵀ Rγ` where `L` is `YC` (DFP) or `RC` (BFGS).
///
/// Uses the cached `(YC)ᵀRC` unless it is too badly conditioned, in which
/// case the Petrov–Galerkin form `Lᵀ(T z − Rγ) = 0` (with `T` the other
/// difference matrix) is solved from the raw columns. With `reg > 0` the
/// matrix is shifted by `reg·‖·‖_F` away from zero along its definiteness,
/// mirroring the regularized γ solve, and the raw-column path is skipped.
fn inner_solve(
    history: &IterateHistory,
    gamma: &DVector<f64>,
    kind: MethodKind,
    reg: f64,
) -> Result<DVector<f64>> {
    let left_is_y = kind == MethodKind::Dfp;
    let rhs = if left_is_y { history.yc_r() } else { history.rc_r() } * gamma;
    let mut inner = linalg::symmetrize(history.yc_rc());
    if reg > 0.0 {
        let n = inner.nrows();
        let shift = reg * inner.norm() * inner.trace().signum();
        inner += DMatrix::identity(n, n) * shift;
        return equilibrated_solve(&inner, &rhs).map(|(z, _)| z).ok_or_else(|| {
            Error::FactoredPreconditioner {
                method: kind.to_string(),
            }
        });
    }
    match equilibrated_solve(&inner, &rhs) {
        Some((z, cond)) if gram_is_reliable(history, cond) => return Ok(z),
        _ => {}
    }
    let (yc, rc) = (history.yc_matrix(), history.rc_matrix());
    let (test, trial) = if left_is_y { (&yc, &rc) } else { (&rc, &yc) };
    linalg::projected_solve(test, trial, &history.combine_r(gamma))
        .map(|(z, _)| z)
        .or_else(|| equilibrated_solve(&inner, &rhs).map(|(z, _)| z))
        .ok_or_else(|| Error::FactoredPreconditioner {
            method: kind.to_string(),
        })
}

/// Diagonally scaled LU solve with a conditioning check; also returns the
/// condition estimate of the scaled matrix.
fn equilibrated_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let n = m.nrows();
    let s = DVector::from_fn(n, |i, _| {
        let d = m[(i, i)].abs().sqrt();
        if d > 0.0 && d.is_finite() {
            d
        } else {
            1.0
        }
    });
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (s[i] * s[j]));
    let (inv, cond) = linalg::checked_inverse(&scaled)?;
    Some(((inv * rhs.component_div(&s)).component_div(&s), cond))
}

/// Curvature products `(RC)ᵀ(G−I)RC`, `(RC)ᵀ(G−I)r_N` and the columns
/// `(G − I)r_i`, from the history cache when available, otherwise with `N`
/// operator applications.
struct CurvatureSystem {
    k: DMatrix<f64>,
    q: DVector<f64>,
    ar: DMatrix<f64>,
}

impl CurvatureSystem {
    fn new(history: &IterateHistory, problem: &LinearFixedPoint) -> Result<(Self, usize)> {
        let n = history.len();
        if let (Some(k), Some(p)) = (history.rc_arc(), history.rc_ar()) {
            let ar = DMatrix::from_fn(history.dim(), n, |i, j| history.curvature_col(j).unwrap()[i]);
            let sys = Self {
                k: linalg::symmetrize(k),
                q: p.column(n - 1).into_owned(),
                ar,
            };
            return Ok((sys, 0));
        }
        let mut ar = DMatrix::zeros(history.dim(), n);
        for (j, r) in history.r_cols().enumerate() {
            ar.set_column(j, &problem.apply_g_minus_i(r)?);
        }
        let rc = history.rc_matrix();
        let arc = if n >= 2 {
            &ar * difference_matrix(n)?
        } else {
            DMatrix::zeros(history.dim(), 0)
        };
        let sys = Self {
            k: linalg::symmetrize(&(rc.transpose() * arc)),
            q: rc.transpose() * ar.column(n - 1),
            ar,
        };
        Ok((sys, n))
    }
}

impl CurvatureSystem {
    /// `γ_{G−I}`, re-solved from the raw columns as in
    /// [`solve_gamma`] when unregularized and badly conditioned.
    fn gamma(&self, history: &IterateHistory, reg: f64) -> Result<GammaCoefficients> {
        let fast = solve_reduced(&self.k, &self.q, reg, "G-I");
        let n = history.len();
        let projected = || -> Result<GammaCoefficients> {
            let arc = &self.ar * difference_matrix(n)?;
            let rhs = -self.ar.column(n - 1);
            let (z, cond) = linalg::projected_solve(&history.rc_matrix(), &arc, &rhs)
                .ok_or_else(|| Error::SingularGram { spec: "G-I".into() })?;
            let mut gamma = apply_difference(&z);
            gamma[n - 1] += 1.0;
            Ok(GammaCoefficients {
                gamma,
                gram_condition_estimate: cond,
            })
        };
        if reg > 0.0 || n < 2 {
            return fast;
        }
        match fast {
            Ok(g) if gram_is_reliable(history, g.gram_condition_estimate) => Ok(g),
            Ok(g) => Ok(projected().unwrap_or(g)),
            Err(e @ Error::SingularGram { .. }) => projected().map_err(|_| e),
            Err(e) => Err(e),
        }
    }
}

fn cg_weights(
    history: &IterateHistory,
    curv: &CurvatureSystem,
    gamma_i: GammaCoefficients,
    reg: f64,
) -> Result<StepWeights> {
    let n = history.len();
    let gamma_a = curv.gamma(history, reg)?;
    // 1ᵀM⁻¹1 = 1 / (γᵀMγ) for the normalized solution of either Gram
    let r_i = history.combine_r(&gamma_i.gamma);
    let r_a = history.combine_r(&gamma_a.gamma);
    let beta_star = r_i.norm_squared() / r_a.dot(&(&curv.ar * &gamma_a.gamma));
    if !beta_star.is_finite() {
        return Err(Error::SingularGram { spec: "G-I".into() });
    }
    Ok(StepWeights {
        y_base: gamma_i.gamma.clone(),
        y_beta: DVector::zeros(n),
        r_weights: gamma_a.gamma,
        beta: beta_star,
        gamma: gamma_i,
    })
}

/// `β* = (1ᵀ(Rᵀ(G−I)R)⁻¹1) / (1ᵀ(RᵀR)⁻¹1)`.
///
/// The CG iterate is `Yγ_I − β*·Rγ_{G−I}`: with `P = R(Rᵀ(G−I)R)⁻¹Rᵀ`,
/// `PRγ_I = β*·Rγ_{G−I}`, and `−β*` is the exact minimizer of the quadratic
/// along `Yγ_I + tRγ_{G−I}`.
pub fn cg_beta_star(history: &IterateHistory, problem: &LinearFixedPoint) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, have: 0 });
    }
    let (curv, _) = CurvatureSystem::new(history, problem)?;
    let gamma_i = solve_gamma(history, &WeightSpec::Identity, 0.0)?;
    Ok(cg_weights(history, &curv, gamma_i, 0.0)?.beta)
}

/// Exact minimizer over `β` of the quadratic `½(y−x*)ᵀ(I−G)(y−x*)` along
/// `y(β) = Ya₀ + β(Ya₁ − Rb)`; equivalently of the ridge objective.
///
/// Uses `r(Ya₀) = Ra₀` (since `1ᵀa₀ = 1`) and `(G−I)Ya₁ = Ra₁` (since
/// `1ᵀa₁ = 0`), so only `(G − I)Rb` is new: one operator application, or
/// none when curvature columns are cached. Returns `None` when the
/// direction has no curvature.
pub fn line_search_beta(
    history: &IterateHistory,
    weights: &StepWeights,
    problem: &LinearFixedPoint,
) -> Result<(Option<f64>, usize)> {
    let v = history.combine_y(&weights.y_beta) - history.combine_r(&weights.r_weights);
    let r_u = history.combine_r(&weights.y_base);
    let (arb, ops) = match cached_curvature(history, &weights.r_weights) {
        Some(arb) => (arb, 0),
        None => (
            problem.apply_g_minus_i(&history.combine_r(&weights.r_weights))?,
            1,
        ),
    };
    // (G − I)v = Ra₁ − (G − I)Rb
    let gv = history.combine_r(&weights.y_beta) - arb;
    let curvature = -v.dot(&gv);
    let beta = r_u.dot(&v) / curvature;
    if !(curvature > 0.0) || !beta.is_finite() || beta == 0.0 {
        return Ok((None, ops));
    }
    Ok((Some(beta), ops))
}

fn cached_curvature(history: &IterateHistory, w: &DVector<f64>) -> Option<DVector<f64>> {
    if !history.tracks_curvature() {
        return None;
    }
    let mut out = DVector::zeros(history.dim());
    for (i, &wi) in w.iter().enumerate() {
        out.axpy(wi, history.curvature_col(i)?, 1.0);
    }
    Some(out)
}

fn dense_guard(d: usize) -> Result<()> {
    if d > DENSE_CAP {
        return Err(Error::DenseCap {
            dim: d,
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

/// Dense preconditioner `P` of the configured method on the current history,
/// such that `gna_step` (without line search) equals `(Y − PR)γ_W`.
///
/// | kind                                  | `P`                               |
/// |---------------------------------------|-----------------------------------|
/// | Anderson, Broyden I/II, SR-k          | `βI`                              |
/// | DFP                                   | `βI + YC((YC)ᵀRC)⁻¹(YC)ᵀ`         |
/// | BFGS                                  | `β(I − YC((YC)ᵀRC)⁻¹(RC)ᵀ)`       |
/// | GMRES                                 | `0`                               |
/// | CG                                    | `R(Rᵀ(G−I)R)⁻¹Rᵀ`                 |
pub fn dense_preconditioner(
    history: &IterateHistory,
    config: &MethodConfig,
    problem: &LinearFixedPoint,
) -> Result<DMatrix<f64>> {
    let d = history.dim();
    dense_guard(d)?;
    let n = history.len();
    let eye = DMatrix::<f64>::identity(d, d);
    let beta = config.beta;
    let singular = || Error::FactoredPreconditioner {
        method: config.kind.to_string(),
    };
    Ok(match config.kind {
        MethodKind::Anderson | MethodKind::BroydenI | MethodKind::BroydenII | MethodKind::Srk => eye * beta,
        MethodKind::Dfp | MethodKind::Bfgs if n < 2 => eye * beta,
        MethodKind::Gmres => DMatrix::zeros(d, d),
        MethodKind::Dfp => {
            let (yc, rc) = secant_pairs(history)?;
            // ((YC)ᵀRC)⁻¹(YC)ᵀ
            let coef = linalg::projected_solve_many(&yc, &rc, &eye)
                .ok_or_else(singular)?
                .0;
            &eye * beta + &yc * coef
        }
        MethodKind::Bfgs => {
            let (yc, rc) = secant_pairs(history)?;
            // ((RC)ᵀYC)⁻¹(RC)ᵀ, equal to ((YC)ᵀRC)⁻¹(RC)ᵀ on linear histories
            let coef = linalg::projected_solve_many(&rc, &yc, &eye)
                .ok_or_else(singular)?
                .0;
            (&eye - &yc * coef) * beta
        }
        MethodKind::Cg => {
            let r = history.r_matrix();
            let ar = (problem.dense_g() - &eye) * &r;
            let coef = linalg::projected_solve_many(&r, &ar, &eye)
                .ok_or_else(singular)?
                .0;
            &r * coef
        }
    })
}

fn secant_pairs(history: &IterateHistory) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            have: history.len(),
        });
    }
    Ok((history.yc_matrix(), history.rc_matrix()))
}

/// Dense multi-secant families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultisecantKind {
    /// Type-I Broyden; approximates the Jacobian `J` and reports `J⁻¹`.
    BroydenI,
    /// Type-II Broyden; approximates the inverse Jacobian `H` directly.
    BroydenII,
    Dfp,
    Bfgs,
    Srk,
}

impl MultisecantKind {
    pub const ALL: [MultisecantKind; 5] = [
        MultisecantKind::BroydenI,
        MultisecantKind::BroydenII,
        MultisecantKind::Dfp,
        MultisecantKind::Bfgs,
        MultisecantKind::Srk,
    ];

    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            MultisecantKind::Dfp | MultisecantKind::Bfgs | MultisecantKind::Srk
        )
    }
}

/// Weight `M` of the generalized multi-secant updates.
///
/// `InverseOfGminusI` is applied implicitly through `M·RC = YC` and
/// `M⁻¹·YC = RC`, which hold exactly on histories of linear problems.
#[derive(Clone, Debug)]
pub enum SecantWeight {
    Identity,
    InverseOfGminusI,
    Dense(DMatrix<f64>),
}

/// Initialization `H₀` of the inverse-Jacobian estimate (`J₀ = H₀⁻¹`).
#[derive(Clone, Debug)]
pub enum Initialization {
    Scaled(f64),
    Dense(DMatrix<f64>),
}

impl Initialization {
    fn dense(&self, d: usize) -> Result<DMatrix<f64>> {
        match self {
            Initialization::Scaled(beta) => {
                if *beta == 0.0 {
                    return Err(Error::InvalidInput("initialization scale must be nonzero".into()));
                }
                Ok(DMatrix::identity(d, d) * *beta)
            }
            Initialization::Dense(h) => {
                if h.nrows() != d || h.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: h.nrows(),
                    });
                }
                Ok(h.clone())
            }
        }
    }
}

/// Dense approximation `H` of `(G − I)⁻¹` satisfying `H·RC = YC`.
#[derive(Clone, Debug)]
pub struct QNMatrix {
    pub h: DMatrix<f64>,
    pub kind: MultisecantKind,
    pub weight: SecantWeight,
    pub init: Initialization,
}

impl QNMatrix {
    /// `‖H·RC − YC‖_F / ‖YC‖_F`.
    pub fn secant_error(&self, history: &IterateHistory) -> Result<f64> {
        let (yc, rc) = secant_pairs(history)?;
        Ok((&self.h * rc - &yc).norm() / yc.norm())
    }
}

/// Dense multi-secant matrix of the given family.
///
/// With `H₀` the initialization, `Δ = YC − H₀RC`, and `M` the weight:
///
/// * Type-I: `J⁻¹ = H₀ + Δ((YC)ᵀM⁻¹H₀RC)⁻¹(YC)ᵀM⁻¹H₀`
/// * Type-II: `H = H₀ + Δ((RC)ᵀMRC)⁻¹(RC)ᵀM`
/// * DFP: `J = RC(YC)⁺ + (RC(YC)⁺)ᵀ(I − Π) + (I − Π)ᵀJ₀(I − Π)` with
///   `(YC)⁺ = ((YC)ᵀM⁻¹YC)⁻¹(YC)ᵀM⁻¹`, `Π = YC(YC)⁺`, and `H = J⁻¹`
/// * BFGS: `H = YC(RC)⁺ + (YC(RC)⁺)ᵀ(I − Π) + (I − Π)ᵀH₀(I − Π)` with
///   `(RC)⁺ = ((RC)ᵀMRC)⁻¹(RC)ᵀM`, `Π = RC(RC)⁺`
/// * SR-k: `H = H₀ + Δ(ΔᵀRC)⁻¹Δᵀ` (the weight is ignored)
///
/// For DFP and BFGS the weight `(G − I)⁻¹` with `H₀ = βI` gives the simple
/// closed forms, used directly in that case:
///
/// * DFP: `β(I − RC((RC)ᵀRC)⁻¹(RC)ᵀ) + YC((YC)ᵀRC)⁻¹(YC)ᵀ`
/// * BFGS: `β(I − Π)ᵀ(I − Π) + YC((YC)ᵀRC)⁻¹(YC)ᵀ` with
///   `Π = RC((YC)ᵀRC)⁻¹(YC)ᵀ`
///
/// `Π` is an oblique projector, so `(I − Π)ᵀ(I − Π) ≠ I − Π − Πᵀ`; the
/// shorter expression `β(I − Πᵀ) + (YC − βRC)((YC)ᵀRC)⁻¹(YC)ᵀ` produces the
/// same extrapolation on `Rγ_{(G−I)⁻¹}` but violates `H·RC = YC`.
///
/// SR-k returns `H₀` unchanged when `Δ` vanishes (to `1e-12` relative), the
/// case where `H₀` already satisfies every secant equation.
pub fn build_multisecant_matrix(
    kind: MultisecantKind,
    history: &IterateHistory,
    weight: &SecantWeight,
    init: &Initialization,
) -> Result<QNMatrix> {
    let d = history.dim();
    dense_guard(d)?;
    let (yc, rc) = secant_pairs(history)?;
    let h0 = init.dense(d)?;
    let eye = DMatrix::<f64>::identity(d, d);
    let undefined = || Error::UpdateUndefined {
        kind: format!("{kind:?}"),
    };
    let inv = |m: DMatrix<f64>| linalg::checked_inverse(&m).map(|(i, _)| i).ok_or_else(undefined);
    // (VᵀA)⁻¹Vᵀ through an orthonormal basis of range(V), avoiding the squared Gram
    let pinv = |test: &DMatrix<f64>, trial: &DMatrix<f64>| {
        linalg::projected_solve_many(test, trial, &eye)
            .map(|(c, _)| c)
            .ok_or_else(undefined)
    };

    // M·RC and M⁻¹·YC
    let (m_rc, minv_yc) = match weight {
        SecantWeight::Identity => (rc.clone(), yc.clone()),
        SecantWeight::InverseOfGminusI => (yc.clone(), rc.clone()),
        SecantWeight::Dense(m) => {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.nrows(),
                });
            }
            let minv = inv(m.clone())?;
            (m * &rc, minv * &yc)
        }
    };
    let simple =
        matches!(weight, SecantWeight::InverseOfGminusI) && matches!(init, Initialization::Scaled(_));

    let h = match kind {
        MultisecantKind::BroydenI => {
            let delta = &yc - &h0 * &rc;
            &h0 + delta * pinv(&(h0.transpose() * &minv_yc), &rc)?
        }
        MultisecantKind::BroydenII => {
            let delta = &yc - &h0 * &rc;
            &h0 + delta * pinv(&m_rc, &rc)?
        }
        MultisecantKind::Srk => {
            let delta = &yc - &h0 * &rc;
            if delta.amax() <= 1e-12 * yc.amax() {
                // H₀ already satisfies the secant equations
                return Ok(QNMatrix {
                    h: h0,
                    kind,
                    weight: weight.clone(),
                    init: init.clone(),
                });
            }
            let coef = pinv(&delta, &rc)?;
            &h0 + &delta * coef
        }
        MultisecantKind::Dfp if simple => {
            let beta = h0[(0, 0)];
            let proj = &rc * pinv(&rc, &rc)?;
            (&eye - proj) * beta + &yc * pinv(&yc, &rc)?
        }
        MultisecantKind::Bfgs if simple => {
            let beta = h0[(0, 0)];
            let coef = pinv(&yc, &rc)?;
            let comp = &eye - &rc * &coef;
            comp.transpose() * &comp * beta + &yc * &coef
        }
        MultisecantKind::Dfp => {
            let j0 = inv(h0.clone())?;
            let coef = pinv(&minv_yc, &yc)?;
            let a = &rc * &coef;
            let comp = &eye - &yc * &coef;
            let j = &a + a.transpose() * &comp + comp.transpose() * j0 * &comp;
            inv(j)?
        }
        MultisecantKind::Bfgs => {
            let coef = pinv(&m_rc, &rc)?;
            let a = &yc * &coef;
            let comp = &eye - &rc * &coef;
            &a + a.transpose() * &comp + comp.transpose() * &h0 * &comp
        }
    };
    Ok(QNMatrix {
        h,
        kind,
        weight: weight.clone(),
        init: init.clone(),
    })
}

/// Generalized quasi-Newton step `(Y − HR)γ`. Any `γ` with `1ᵀγ = 1` gives
/// the same point when `H` satisfies the secant equations.
pub fn generalized_qn_step(
    h: &QNMatrix,
    history: &IterateHistory,
    gamma: &DVector<f64>,
) -> Result<DVector<f64>> {
    dense_qn_step(&h.h, history, gamma)
}

/// `(Y − HR)γ` for an arbitrary dense `H`.
pub fn dense_qn_step(
    h: &DMatrix<f64>,
    history: &IterateHistory,
    gamma: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(history.len(), gamma.len())?;
    check_dim(history.dim(), h.nrows())?;
    let sum = gamma.dot(&ones(gamma.len()));
    // cancellation in the sum grows with the coefficient magnitudes
    if (sum - 1.0).abs() > 1e-10 * gamma.lp_norm(1).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "coefficients must sum to one, got {sum}"
        )));
    }
    Ok(history.combine_y(gamma) - h * history.combine_r(gamma))
}
