//! Generalized nonlinear acceleration for linear fixed-point iterations.
//!
//! One extrapolation engine `y = (Y − PR)γ_W`, parametrized by a weight `W`
//! and a preconditioner `P`, reproduces Anderson acceleration, multi-secant
//! Broyden, DFP, BFGS and SR-k steps, and GMRES/CG iterates.
//!
//! ```
//! use gna::{make_random_spd_problem, online_accelerate, MethodConfig, MethodKind, OnlineOptions};
//!
//! let problem = make_random_spd_problem(10, 1e-3, 7).unwrap();
//! let y0 = nalgebra::DVector::zeros(10);
//! let config = MethodConfig::new(MethodKind::Anderson, -1.0).unwrap();
//! let run = online_accelerate(&problem, &y0, &config, &OnlineOptions::new(None, 30)).unwrap();
//! let first = run.rows.first().unwrap().res_l2;
//! let last = run.rows.last().unwrap().res_l2;
//! assert!(last <= 1e-8 * first);
//! ```

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod fixedpoint;
pub mod gamma;
pub mod history;
pub mod linalg;
pub mod methods;

pub use analysis::{
    amplification_factor, chebyshev_factor, offline_bound_report, optimal_polynomial_residual, reference_cg,
    reference_gmres, BoundReport, PolynomialResidual,
};
pub use dataset::{make_surrogate_dataset, read_dense, read_libsvm, write_libsvm};
pub use driver::{
    offline_extrapolate, online_accelerate, run_baseline, OfflineResult, OnlineOptions, RunEvent, RunRecord,
    RunRow,
};
pub use error::{Error, Result};
pub use fixedpoint::{
    make_random_spd_problem, make_ridge_problem, make_ridge_problem_with_kappa,
    make_spd_problem_with_spectrum, LinearFixedPoint,
};
pub use gamma::{
    dense_weight, solve_gamma, solve_gamma_from_gram, GammaCoefficients, IncrementalGamma, Operator,
    WeightSpec,
};
pub use history::{apply_difference, difference_matrix, IterateHistory};
pub use methods::{
    build_multisecant_matrix, cg_beta_star, dense_preconditioner, generalized_qn_step, gna_step,
    Initialization, MethodConfig, MethodKind, MultisecantKind, QNMatrix, SecantWeight, StepWeights,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/methods.md")]
    mod methods {}
    #[doc = include_str!("../../../book/src/krylov.md")]
    mod krylov {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
}
