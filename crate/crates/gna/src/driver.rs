//! Baseline, offline and online acceleration loops with per-iteration traces.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::analysis::{amplification_factor, chebyshev_factor};
use crate::error::{check_dim, Error, Result};
use crate::fixedpoint::LinearFixedPoint;
use crate::gamma::{dense_weight, IncrementalGamma, BREAKDOWN_COND};
use crate::history::IterateHistory;
use crate::methods::{gna_step_detailed, step_from_gamma, MethodConfig, MethodKind, DENSE_CAP};

/// One trace row. Row `i` describes the point `y_{i−1}` evaluated at
/// iteration `i`, whose residual is `r_i = g(y_{i−1}) − y_{i−1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub iter: usize,
    pub res_l2: f64,
    /// `‖r_i‖_W` in the method's norm, when the dense weight is available.
    pub res_w: Option<f64>,
    /// `‖y_{i−1} − x*‖₂`, when the optimum is known.
    pub err_l2: Option<f64>,
    pub bound: Option<f64>,
    /// Cumulative applications of `g` or `G − I`.
    pub ops: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunEvent {
    /// History cleared after a failed solve; the run continued from the
    /// current iterate.
    Restart { iter: usize, reason: String },
    /// The incremental Gram inverse was rebuilt from scratch.
    Refactorization { iter: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub events: Vec<RunEvent>,
}

impl RunRecord {
    pub fn first_residual(&self) -> Option<f64> {
        self.rows.first().map(|r| r.res_l2)
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.rows.last().map(|r| r.res_l2)
    }

    pub fn restarts(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, RunEvent::Restart { .. }))
            .count()
    }

    /// Rows whose `res_w` exceeds `bound` by more than the relative slack
    /// `rel` plus `abs_floor · ‖r₁‖_W`.
    pub fn bound_violations(&self, rel: f64, abs_floor: f64) -> usize {
        let r1 = self.rows.first().and_then(|r| r.res_w).unwrap_or(0.0);
        self.rows
            .iter()
            .filter(|row| match (row.res_w, row.bound) {
                (Some(w), Some(b)) => w > b * (1.0 + rel) + abs_floor * r1,
                _ => false,
            })
            .count()
    }

    /// Copy with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.seconds = 0.0;
        }
        out
    }
}

fn err_to(problem: &LinearFixedPoint, y: &DVector<f64>) -> Option<f64> {
    problem.x_star().map(|xs| (y - xs).norm())
}

/// Plain fixed-point iteration `x_i = g(y_{i−1})`, `y_i = x_i`, recording
/// every pair in a full-memory history.
pub fn run_baseline(
    problem: &LinearFixedPoint,
    y0: &DVector<f64>,
    iters: usize,
) -> Result<(RunRecord, IterateHistory)> {
    check_dim(problem.dim(), y0.len())?;
    if iters == 0 {
        return Err(Error::InvalidInput("iteration budget must be at least 1".into()));
    }
    let start = Instant::now();
    let mut history = IterateHistory::new(problem.dim(), None)?;
    let mut record = RunRecord::default();
    let mut y = y0.clone();
    for i in 1..=iters {
        let x = problem.apply(&y)?;
        let res = (&x - &y).norm();
        record.rows.push(RunRow {
            iter: i,
            res_l2: res,
            res_w: Some(res),
            err_l2: err_to(problem, &y),
            bound: None,
            ops: i,
            seconds: start.elapsed().as_secs_f64(),
        });
        history.push(y, x.clone())?;
        y = x;
    }
    Ok((record, history))
}

/// Result of one offline extrapolation.
#[derive(Clone, Debug)]
pub struct OfflineResult {
    pub y: DVector<f64>,
    /// `‖g(y) − y‖₂`
    pub residual_norm: f64,
}

/// Extrapolates from the first `n` columns of a baseline history, solving
/// everything from scratch.
pub fn offline_extrapolate(
    problem: &LinearFixedPoint,
    baseline: &IterateHistory,
    n: usize,
    config: &MethodConfig,
) -> Result<OfflineResult> {
    let prefix = baseline.prefix(n)?;
    let step = gna_step_detailed(&prefix, config, problem)?;
    let residual_norm = problem.residual(&step.y)?.norm();
    Ok(OfflineResult {
        y: step.y,
        residual_norm,
    })
}

/// Settings for [`online_accelerate`].
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineOptions {
    /// Window size; `None` keeps full memory.
    pub nmax: Option<usize>,
    pub iters: usize,
    /// Stop once `‖r_i‖₂ ≤ tol·‖r₁‖₂`; zero stops only on an exact zero residual.
    pub tol: f64,
    /// Compute `res_w` and `bound` when the dimension allows dense work.
    pub instrument: bool,
}

impl OnlineOptions {
    pub fn new(nmax: Option<usize>, iters: usize) -> Self {
        Self {
            nmax,
            iters,
            tol: 0.0,
            instrument: true,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_instrumentation(mut self, on: bool) -> Self {
        self.instrument = on;
        self
    }
}

/// Online acceleration: `x_i = g(y_{i−1})`, then `y_i` is the method's
/// extrapolation from the windowed history.
///
/// `γ_W` is maintained incrementally. A failed solve clears the history,
/// re-seeds it with the current pair and continues (a restart event). When
/// instrumentation is on and `d ≤` [`DENSE_CAP`], rows carry `‖r_i‖_W`
/// and, while the history is full memory and unbroken, the bound
/// `‖I − (G−I)P‖₂ · chebyshev(κ, i−1) · ‖r₁‖_W` (row 1 carries `‖r₁‖_W`).
pub fn online_accelerate(
    problem: &LinearFixedPoint,
    y0: &DVector<f64>,
    config: &MethodConfig,
    options: &OnlineOptions,
) -> Result<RunRecord> {
    config.validate()?;
    check_dim(problem.dim(), y0.len())?;
    if !config.kind.supports_online() {
        return Err(Error::UnsupportedOnline {
            method: config.kind.to_string(),
        });
    }
    if options.iters == 0 {
        return Err(Error::InvalidInput("iteration budget must be at least 1".into()));
    }
    let d = problem.dim();
    let spec = config.weight_spec();
    let curvature = config.kind == MethodKind::Cg;
    let mut history = IterateHistory::new(d, options.nmax)?;
    if curvature {
        history = history.with_curvature();
    }
    let mut inc = IncrementalGamma::new(spec.clone(), config.reg)?;

    let dense = options.instrument && d <= DENSE_CAP;
    let weight: Option<DMatrix<f64>> = if dense {
        dense_weight(&problem.dense_g(), &spec).ok()
    } else {
        None
    };
    let wnorm = |v: &DVector<f64>| weight.as_ref().map(|w| v.dot(&(w * v)).max(0.0).sqrt());
    let mut bound_ok = dense && problem.kappa().is_some();
    let mut amplification: Option<f64> = None;

    let start = Instant::now();
    let mut instrument_time = 0.0;
    let mut record = RunRecord::default();
    let mut ops = 0;
    let mut y = y0.clone();
    let mut r1_l2 = 0.0;
    let mut r1_w = None;
    let mut refactorizations = 0;

    for i in 1..=options.iters {
        let x = problem.apply(&y)?;
        ops += 1;
        let r = &x - &y;
        let ar = if curvature {
            ops += 1;
            Some(problem.apply_g_minus_i(&r)?)
        } else {
            None
        };

        let t0 = Instant::now();
        let res_l2 = r.norm();
        let res_w = wnorm(&r);
        if i == 1 {
            r1_l2 = res_l2;
            r1_w = res_w;
        }
        let bound = match (bound_ok, i, r1_w) {
            (true, 1, Some(r1)) => Some(r1),
            (true, _, Some(r1)) => amplification
                .zip(problem.kappa())
                .and_then(|(amp, kappa)| chebyshev_factor(kappa, i - 1).ok().map(|c| amp * c * r1)),
            _ => None,
        };
        instrument_time += t0.elapsed().as_secs_f64();
        record.rows.push(RunRow {
            iter: i,
            res_l2,
            res_w,
            err_l2: err_to(problem, &y),
            bound,
            ops,
            seconds: start.elapsed().as_secs_f64() - instrument_time,
        });
        if res_l2 == 0.0 || res_l2 <= options.tol * r1_l2 || i == options.iters {
            break;
        }

        let pushed = push_pair(&mut history, &mut inc, y.clone(), x.clone(), ar.clone());
        match pushed {
            Ok(evicted) => bound_ok &= !evicted,
            Err(e) => {
                restart(&mut history, &mut inc, &y, &x, ar.as_ref(), i, &e, &mut record)?;
                bound_ok = false;
            }
        }
        let solved = inc.gamma_for(&history).and_then(|g| {
            if config.reg == 0.0 && g.gram_condition_estimate > BREAKDOWN_COND {
                Err(Error::IllConditioned {
                    spec: spec.name(),
                    condition: g.gram_condition_estimate,
                })
            } else {
                Ok(g)
            }
        });
        let step = match solved.and_then(|g| step_from_gamma(&history, config, problem, g)) {
            Ok(step) => step,
            Err(e) => {
                restart(&mut history, &mut inc, &y, &x, ar.as_ref(), i, &e, &mut record)?;
                bound_ok = false;
                let g = inc.gamma_for(&history)?;
                step_from_gamma(&history, config, problem, g)?
            }
        };
        if inc.refactorizations() > refactorizations {
            refactorizations = inc.refactorizations();
            record.events.push(RunEvent::Refactorization { iter: i });
        }
        ops += step.operator_applications;

        if bound_ok {
            let t0 = Instant::now();
            let used = MethodConfig {
                beta: if config.kind == MethodKind::Cg {
                    config.beta
                } else {
                    step.weights.beta
                },
                line_search: false,
                ..config.clone()
            };
            amplification = amplification_factor(problem, &history, &used).ok();
            if amplification.is_none() {
                bound_ok = false;
            }
            instrument_time += t0.elapsed().as_secs_f64();
        }
        y = step.y;
    }
    Ok(record)
}

fn push_pair(
    history: &mut IterateHistory,
    inc: &mut IncrementalGamma,
    y: DVector<f64>,
    x: DVector<f64>,
    ar: Option<DVector<f64>>,
) -> Result<bool> {
    let outcome = match ar {
        Some(ar) => history.push_with_curvature(y, x, ar)?,
        None => history.push(y, x)?,
    };
    inc.update(history, outcome.evicted)?;
    Ok(outcome.evicted)
}

#[allow(clippy::too_many_arguments)]
fn restart(
    history: &mut IterateHistory,
    inc: &mut IncrementalGamma,
    y: &DVector<f64>,
    x: &DVector<f64>,
    ar: Option<&DVector<f64>>,
    iter: usize,
    cause: &Error,
    record: &mut RunRecord,
) -> Result<()> {
    record.events.push(RunEvent::Restart {
        iter,
        reason: cause.to_string(),
    });
    history.clear();
    inc.clear();
    push_pair(history, inc, y.clone(), x.clone(), ar.cloned())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{make_random_spd_problem, LinearFixedPoint};

    fn scalar() -> LinearFixedPoint {
        LinearFixedPoint::from_dense(DMatrix::from_element(1, 1, 0.5), DVector::zeros(1), Some(0.5)).unwrap()
    }

    #[test]
    fn baseline_scalar_decay() {
        let (rec, h) = run_baseline(&scalar(), &DVector::from_element(1, 1.0), 4).unwrap();
        let res: Vec<f64> = rec.rows.iter().map(|r| r.res_l2).collect();
        assert_eq!(res, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn baseline_at_optimum() {
        let p = make_random_spd_problem(5, 0.1, 1).unwrap();
        let (rec, _) = run_baseline(&p, p.x_star().unwrap(), 3).unwrap();
        assert!(rec.rows.iter().all(|r| r.res_l2 < 1e-14));
    }

    #[test]
    fn offline_single_column_is_next_iterate() {
        let p = make_random_spd_problem(6, 0.1, 2).unwrap();
        let (_, h) = run_baseline(&p, &DVector::from_element(6, 1.0), 3).unwrap();
        let cfg = MethodConfig::new(MethodKind::Anderson, -1.0).unwrap();
        let out = offline_extrapolate(&p, &h, 1, &cfg).unwrap();
        assert!((&out.y - h.x_col(0)).norm() < 1e-15 * h.x_col(0).norm());
    }

    #[test]
    fn window_one_reduces_to_baseline() {
        let p = make_random_spd_problem(6, 0.1, 3).unwrap();
        let y0 = DVector::from_element(6, 1.0);
        let cfg = MethodConfig::new(MethodKind::Anderson, -1.0).unwrap();
        let online = online_accelerate(&p, &y0, &cfg, &OnlineOptions::new(Some(1), 8)).unwrap();
        let (base, _) = run_baseline(&p, &y0, 8).unwrap();
        for (a, b) in online.rows.iter().zip(&base.rows) {
            assert!((a.res_l2 - b.res_l2).abs() <= 1e-12 * b.res_l2);
        }
    }

    #[test]
    fn gmres_rejected_online() {
        let p = make_random_spd_problem(4, 0.1, 4).unwrap();
        let cfg = MethodConfig::new(MethodKind::Gmres, 1.0).unwrap();
        let err = online_accelerate(&p, &DVector::zeros(4), &cfg, &OnlineOptions::new(None, 5)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedOnline { .. }));
    }

    #[test]
    fn deterministic_trace() {
        let p = make_random_spd_problem(10, 0.01, 5).unwrap();
        let cfg = MethodConfig::new(MethodKind::Bfgs, -1.0).unwrap();
        let opts = OnlineOptions::new(Some(4), 20);
        let a = online_accelerate(&p, &DVector::zeros(10), &cfg, &opts).unwrap();
        let b = online_accelerate(&p, &DVector::zeros(10), &cfg, &opts).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        assert!(a
            .rows
            .windows(2)
            .all(|w| w[0].iter < w[1].iter && w[0].ops <= w[1].ops));
    }
}
