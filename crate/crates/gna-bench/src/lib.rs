//! Benchmark harness: builds a problem, runs a grid of methods on it and
//! writes one CSV trace per cell plus a summary.
//!
//! Settings come from a flat `key = value` file and are overridden by
//! command-line flags.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use gna::{
    make_random_spd_problem, make_ridge_problem, make_ridge_problem_with_kappa, offline_extrapolate,
    online_accelerate, read_dense, read_libsvm, run_baseline, LinearFixedPoint, MethodConfig, MethodKind,
    OnlineOptions, RunRecord, RunRow,
};
use nalgebra::DVector;
use thiserror::Error;

/// Header of every per-cell trace.
pub const TRACE_HEADER: [&str; 7] = ["iter", "res_l2", "res_w", "err_l2", "bound", "ops", "seconds"];

/// Relative slack allowed before a row counts as a bound violation.
pub const BOUND_REL_SLACK: f64 = 1e-9;

/// Absolute slack, as a fraction of `‖r₁‖_W`, for rows at rounding level.
pub const BOUND_ABS_FLOOR: f64 = 1e-12;

/// Offline GMRES curves stop at this many history columns.
pub const GMRES_CURVE_CAP: usize = 200;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Gna(#[from] gna::Error),
}

impl BenchError {
    /// Process exit code: 2 for configuration problems, 3 for I/O and data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Gna(gna::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;

fn config_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Libsvm,
    /// Whitespace or comma separated rows; the last column is `b`.
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Synthetic {
        dim: usize,
        kappa: f64,
        seed: u64,
    },
    Ridge {
        dataset: PathBuf,
        format: DatasetFormat,
        /// Exactly one of `lambda` and `kappa` is set.
        lambda: Option<f64>,
        kappa: Option<f64>,
        step: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodConfig>,
    pub nmax: Option<usize>,
    pub iters: usize,
    pub tol: f64,
    pub out: PathBuf,
    pub workers: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(config_err("at least one method is required"));
        }
        if self.iters == 0 {
            return Err(config_err("iteration budget must be at least 1"));
        }
        if self.nmax == Some(0) {
            return Err(config_err("nmax must be at least 1"));
        }
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(config_err(format!("tol must be nonnegative, got {}", self.tol)));
        }
        for m in &self.methods {
            m.validate()?;
        }
        let mut labels: Vec<String> = self.methods.iter().map(cell_label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(config_err(format!("method `{}` listed twice", w[0])));
        }
        Ok(())
    }
}

/// File stem of a cell: the method label, with the mixing parameter
/// appended when it differs from the default `β = −1`.
pub fn cell_label(m: &MethodConfig) -> String {
    if m.kind.uses_beta() && m.beta != -1.0 {
        format!("{}_beta{}", m.label(), m.beta)
    } else {
        m.label()
    }
}

/// Unresolved settings; every field is optional so that a file and a set
/// of flags can be layered.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub problem: Option<String>,
    pub dim: Option<usize>,
    pub kappa: Option<f64>,
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
    pub lambda: Option<f64>,
    pub step: Option<f64>,
    pub methods: Option<String>,
    pub beta: Option<f64>,
    pub line_search: Option<bool>,
    pub nmax: Option<usize>,
    pub iters: Option<usize>,
    pub tol: Option<f64>,
    pub reg: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("line {line}: invalid value `{value}` for `{key}`")))
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {line}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => s.problem = Some(value.to_string()),
                "dim" => s.dim = Some(parse_value(key, value, line)?),
                "kappa" => s.kappa = Some(parse_value(key, value, line)?),
                "seed" => s.seed = Some(parse_value(key, value, line)?),
                "dataset" => s.dataset = Some(PathBuf::from(value)),
                "format" => s.format = Some(value.to_string()),
                "lambda" => s.lambda = Some(parse_value(key, value, line)?),
                "step" => s.step = Some(parse_value(key, value, line)?),
                "methods" => s.methods = Some(value.to_string()),
                "beta" => s.beta = Some(parse_value(key, value, line)?),
                "line_search" => s.line_search = Some(parse_value(key, value, line)?),
                "nmax" => s.nmax = Some(parse_value(key, value, line)?),
                "iters" => s.iters = Some(parse_value(key, value, line)?),
                "tol" => s.tol = Some(parse_value(key, value, line)?),
                "reg" => s.reg = Some(parse_value(key, value, line)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "workers" => s.workers = Some(parse_value(key, value, line)?),
                other => return Err(config_err(format!("line {line}: unknown key `{other}`"))),
            }
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: Settings) -> Settings {
        Settings {
            problem: other.problem.or(self.problem),
            dim: other.dim.or(self.dim),
            kappa: other.kappa.or(self.kappa),
            seed: other.seed.or(self.seed),
            dataset: other.dataset.or(self.dataset),
            format: other.format.or(self.format),
            lambda: other.lambda.or(self.lambda),
            step: other.step.or(self.step),
            methods: other.methods.or(self.methods),
            beta: other.beta.or(self.beta),
            line_search: other.line_search.or(self.line_search),
            nmax: other.nmax.or(self.nmax),
            iters: other.iters.or(self.iters),
            tol: other.tol.or(self.tol),
            reg: other.reg.or(self.reg),
            out: other.out.or(self.out),
            workers: other.workers.or(self.workers),
        }
    }

    /// Fills defaults and checks the result.
    ///
    /// Defaults: a synthetic problem with `d = 25`, `κ = 1e-6`, seed 1; every
    /// β-kind with `β = −1`; full memory; 100 iterations; `tol = 1e-12`; no
    /// regularization; output in `bench-out`; one worker per available core.
    pub fn resolve(self) -> Result<BenchConfig> {
        let problem = match self.problem.as_deref().unwrap_or("synthetic") {
            "synthetic" => ProblemSpec::Synthetic {
                dim: self.dim.unwrap_or(25),
                kappa: self.kappa.unwrap_or(1e-6),
                seed: self.seed.unwrap_or(1),
            },
            "ridge" => {
                let dataset = self
                    .dataset
                    .ok_or_else(|| config_err("ridge problem needs `dataset`"))?;
                let format = match self.format.as_deref().unwrap_or("libsvm") {
                    "libsvm" => DatasetFormat::Libsvm,
                    "dense" => DatasetFormat::Dense,
                    other => return Err(config_err(format!("unknown dataset format `{other}`"))),
                };
                if self.lambda.is_some() == self.kappa.is_some() {
                    return Err(config_err(
                        "ridge problem needs exactly one of `lambda` and `kappa`",
                    ));
                }
                ProblemSpec::Ridge {
                    dataset,
                    format,
                    lambda: self.lambda,
                    kappa: self.kappa,
                    step: self.step,
                }
            }
            other => return Err(config_err(format!("unknown problem `{other}`"))),
        };
        let default_beta = self.beta.unwrap_or(-1.0);
        let methods = match self.methods.as_deref() {
            None => MethodKind::BETA_KINDS
                .iter()
                .map(|k| format!("{k}"))
                .collect::<Vec<_>>()
                .join(","),
            Some(list) => list.to_string(),
        };
        let methods = parse_methods(
            &methods,
            default_beta,
            self.line_search.unwrap_or(false),
            self.reg.unwrap_or(0.0),
        )?;
        let workers = self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let config = BenchConfig {
            problem,
            methods,
            nmax: self.nmax,
            iters: self.iters.unwrap_or(100),
            tol: self.tol.unwrap_or(1e-12),
            out: self.out.unwrap_or_else(|| PathBuf::from("bench-out")),
            workers,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parses a comma separated list of `name[:beta][:ls]` entries.
pub fn parse_methods(
    list: &str,
    default_beta: f64,
    line_search: bool,
    reg: f64,
) -> Result<Vec<MethodConfig>> {
    let mut out = Vec::new();
    for entry in list.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let mut parts = entry.split(':');
        let kind: MethodKind = parts.next().unwrap_or("").parse()?;
        let mut beta = default_beta;
        let mut ls = line_search;
        for part in parts {
            if part == "ls" {
                ls = true;
            } else {
                beta = part
                    .parse()
                    .map_err(|_| config_err(format!("invalid method option `{part}` in `{entry}`")))?;
            }
        }
        out.push(MethodConfig::new(kind, beta)?.with_line_search(ls).with_reg(reg));
    }
    if out.is_empty() {
        return Err(config_err("at least one method is required"));
    }
    Ok(out)
}

fn read_problem(spec: &ProblemSpec) -> Result<LinearFixedPoint> {
    Ok(match spec {
        ProblemSpec::Synthetic { dim, kappa, seed } => make_random_spd_problem(*dim, *kappa, *seed)?,
        ProblemSpec::Ridge {
            dataset,
            format,
            lambda,
            kappa,
            step,
        } => {
            let (a, b) = match format {
                DatasetFormat::Libsvm => read_libsvm(dataset)?,
                DatasetFormat::Dense => {
                    let m = read_dense(dataset)?;
                    if m.ncols() < 2 {
                        return Err(config_err(format!(
                            "{}: dense dataset needs at least two columns",
                            dataset.display()
                        )));
                    }
                    let b = m.column(m.ncols() - 1).into_owned();
                    (m.columns(0, m.ncols() - 1).into_owned(), b)
                }
            };
            match (lambda, kappa) {
                (_, Some(k)) => make_ridge_problem_with_kappa(a, b, *k, *step)?,
                (Some(l), None) => make_ridge_problem(a, b, *l, *step)?,
                (None, None) => return Err(config_err("ridge problem needs `lambda` or `kappa`")),
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Ok,
    /// The method itself failed; the rest of the grid still ran.
    MethodError(String),
    IoError(String),
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellStatus::Ok => write!(f, "ok"),
            CellStatus::MethodError(m) => write!(f, "method error: {m}"),
            CellStatus::IoError(m) => write!(f, "io error: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub label: String,
    pub method: MethodConfig,
    pub record: RunRecord,
    pub bound_violations: usize,
    pub seconds: f64,
    pub trace: PathBuf,
    pub status: CellStatus,
}

impl CellSummary {
    pub fn best_residual(&self) -> Option<f64> {
        self.record.rows.iter().map(|r| r.res_l2).reduce(f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub cells: Vec<CellSummary>,
    pub summary: PathBuf,
}

impl BenchReport {
    pub fn bound_violations(&self) -> usize {
        self.cells.iter().map(|c| c.bound_violations).sum()
    }

    pub fn io_errors(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::IoError(_)))
            .count()
    }

    /// 0 when there are no bound violations and no I/O errors, 3 on I/O
    /// errors, 1 on bound violations only.
    pub fn exit_code(&self) -> i32 {
        if self.io_errors() > 0 {
            3
        } else if self.bound_violations() > 0 {
            1
        } else {
            0
        }
    }
}

/// GMRES has no online form; its curve is the offline extrapolation from
/// the first `n` plain iterates, `n = 1, 2, …`. A failed extrapolation ends
/// the curve and is returned alongside the rows computed so far.
fn gmres_curve(
    problem: &LinearFixedPoint,
    y0: &DVector<f64>,
    config: &MethodConfig,
    iters: usize,
    tol: f64,
) -> gna::Result<(RunRecord, Option<gna::Error>)> {
    let cols = iters.min(problem.dim() + 1).min(GMRES_CURVE_CAP);
    let start = Instant::now();
    let (_, baseline) = run_baseline(problem, y0, cols)?;
    let mut record = RunRecord::default();
    let mut r1 = None;
    for n in 1..=cols {
        let out = match offline_extrapolate(problem, &baseline, n, config) {
            Ok(out) => out,
            Err(e) => return Ok((record, Some(e))),
        };
        let res = out.residual_norm;
        record.rows.push(RunRow {
            iter: n,
            res_l2: res,
            res_w: Some(res),
            err_l2: problem.x_star().map(|xs| (&out.y - xs).norm()),
            bound: None,
            ops: n + 1,
            seconds: start.elapsed().as_secs_f64(),
        });
        let first = *r1.get_or_insert(res);
        if res <= tol * first {
            break;
        }
    }
    Ok((record, None))
}

fn run_cell(problem: &LinearFixedPoint, config: &BenchConfig, method: &MethodConfig) -> CellSummary {
    let y0 = DVector::from_element(problem.dim(), 1.0);
    let label = cell_label(method);
    let trace = config.out.join(format!("{label}.csv"));
    let start = Instant::now();
    let run = if method.kind == MethodKind::Gmres {
        gmres_curve(problem, &y0, method, config.iters, config.tol)
    } else {
        let options = OnlineOptions::new(config.nmax, config.iters).with_tol(config.tol);
        online_accelerate(problem, &y0, method, &options).map(|r| (r, None))
    };
    let seconds = start.elapsed().as_secs_f64();
    let (record, mut status) = match run {
        Ok((record, None)) => (record, CellStatus::Ok),
        Ok((record, Some(e))) => (record, CellStatus::MethodError(e.to_string())),
        Err(e) => (RunRecord::default(), CellStatus::MethodError(e.to_string())),
    };
    if let Err(e) = write_trace(&trace, &record) {
        status = CellStatus::IoError(e.to_string());
    }
    CellSummary {
        label,
        method: method.clone(),
        bound_violations: record.bound_violations(BOUND_REL_SLACK, BOUND_ABS_FLOOR),
        record,
        seconds,
        trace,
        status,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_at(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Writes one trace with the fixed header; missing values are empty fields.
pub fn write_trace(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_at(path))?;
    w.write_record(TRACE_HEADER).map_err(csv_at(path))?;
    for row in &record.rows {
        w.write_record([
            row.iter.to_string(),
            format!("{:e}", row.res_l2),
            opt(row.res_w),
            opt(row.err_l2),
            opt(row.bound),
            row.ops.to_string(),
            format!("{:e}", row.seconds),
        ])
        .map_err(csv_at(path))?;
    }
    w.flush().map_err(io_at(path))
}

fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_at(path))?;
    w.write_record([
        "method",
        "beta",
        "line_search",
        "iterations",
        "first_residual",
        "final_residual",
        "best_residual",
        "restarts",
        "bound_violations",
        "seconds",
        "status",
    ])
    .map_err(csv_at(path))?;
    for c in cells {
        w.write_record([
            c.label.clone(),
            c.method.beta.to_string(),
            c.method.line_search.to_string(),
            c.record.rows.len().to_string(),
            opt(c.record.first_residual()),
            opt(c.record.final_residual()),
            opt(c.best_residual()),
            c.record.restarts().to_string(),
            c.bound_violations.to_string(),
            format!("{:e}", c.seconds),
            c.status.to_string(),
        ])
        .map_err(csv_at(path))?;
    }
    w.flush().map_err(io_at(path))
}

/// Runs every method cell, at most `workers` at a time, then writes
/// `summary.csv` once all cells have finished.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let problem = read_problem(&config.problem)?;
    fs::create_dir_all(&config.out).map_err(io_at(&config.out))?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CellSummary>>> = Mutex::new(vec![None; config.methods.len()]);
    let workers = config.workers.min(config.methods.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(method) = config.methods.get(i) else {
                    break;
                };
                let cell = run_cell(&problem, config, method);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(cell);
            });
        }
    });
    let cells: Vec<CellSummary> = slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|c| c.expect("every cell ran"))
        .collect();

    let summary = config.out.join("summary.csv");
    write_summary(&summary, &cells)?;
    Ok(BenchReport { cells, summary })
}
