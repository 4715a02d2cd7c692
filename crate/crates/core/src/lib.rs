//! Bounded-rationality equilibria for finite discrete-time mean field games.
//!
//! The crate computes mean field flows, value functions and policies for
//! finite games, measures how far a policy is from Nash, logit quantal
//! response (`QpiRe`), Boltzmann (`QstarRe`) and entropy-regularized (`Re`)
//! equilibria, and learns those equilibria with fixed-point iteration,
//! fictitious play and receding-horizon fictitious play.
//!
//! All numeric types are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases fix the scalar to `f64`.
//!
//! ```
//! use mfg_core::games::{make_sis, SisParams};
//! use mfg_core::{gfp, Concept, SolverConfig64};
//!
//! let model = make_sis::<f64>(&SisParams { horizon: 10, ..SisParams::default() }).unwrap();
//! let config = SolverConfig64::new(Concept::Re, 1.0).with_tolerance(1e-3).with_max_iterations(500);
//! let result = gfp(&model, &config).unwrap();
//! assert!(result.converged);
//! ```

pub mod algorithms;
pub mod error;
pub mod experiments;
pub mod games;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod scalar;

pub use algorithms::{
    diagonal_policy, gfp, gfpi, rh_parallel, rh_parallel_observed, rh_sequential,
    rh_sequential_observed, rh_start_times, Averaging, SolverConfig, SolverResult,
};
pub use error::{MfgError, Result};
pub use metrics::{
    best_response, check_chaining, delta_equilibrium, equilibrium_map, evaluate_all,
    exploitability, exploitability_regularized, policy_distance, rh_exploitability, Concept,
    MetricSnapshot,
};
pub use model::{
    validate_model, ConvergenceTrace, Dynamics, MeanFieldFlow, MfgModel, Policy, PolicyEnsemble,
    QFunction, TraceRow, ValidationReport, Violation,
};
pub use scalar::Scalar;

pub type MfgModel64 = MfgModel<f64>;
pub type Policy64 = Policy<f64>;
pub type MeanFieldFlow64 = MeanFieldFlow<f64>;
pub type QFunction64 = QFunction<f64>;
pub type PolicyEnsemble64 = PolicyEnsemble<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolverResult64 = SolverResult<f64>;
pub type MetricSnapshot64 = MetricSnapshot<f64>;

pub type MfgModel32 = MfgModel<f32>;
pub type Policy32 = Policy<f32>;
pub type SolverConfig32 = SolverConfig<f32>;
