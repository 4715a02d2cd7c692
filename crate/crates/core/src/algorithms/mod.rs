//! Learning algorithms: generalized fixed-point iteration, generalized
//! fictitious play and the two receding-horizon fictitious play drivers.

mod continuation;
mod gfp;
mod gfpi;
mod rh;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use continuation::{
    concept_q_map, continue_in_temperature, newton_fixed_point, solve_with_continuation,
    ContinuationResult, NewtonOptions, NewtonOutcome, MAX_NEWTON_UNKNOWNS,
};
pub use gfp::gfp;
pub use gfpi::gfpi;
pub use rh::{
    diagonal_policy, rh_parallel, rh_parallel_observed, rh_sequential, rh_sequential_observed,
    rh_start_times, RhIterate,
};

use crate::error::{MfgError, Result};
use crate::metrics::{Concept, MetricSnapshot};
use crate::model::{ConvergenceTrace, MfgModel, Policy, PolicyEnsemble, TraceRow};
use crate::scalar::Scalar;

/// Weighting of new iterates in fictitious play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Constant weight `1 - beta` on the newest iterate.
    #[default]
    Geometric,
    /// Weight `1 / (k + 2)` at step `k`: the running mean of all iterates.
    Uniform,
}

impl std::str::FromStr for Averaging {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geometric" => Ok(Averaging::Geometric),
            "uniform" => Ok(Averaging::Uniform),
            other => Err(MfgError::InvalidConfig {
                field: "averaging",
                reason: format!("unknown averaging `{other}` (expected geometric or uniform)"),
            }),
        }
    }
}

/// Solver inputs shared by all four algorithms.
#[derive(Debug, Clone)]
pub struct SolverConfig<S> {
    pub concept: Concept,
    /// Temperature `alpha = 1 / lambda`.
    pub alpha: S,
    /// Averaging weight kept on the running average (geometric averaging).
    pub beta: S,
    pub max_iterations: usize,
    /// Early stop once the concept's distance (exploitability for NE) is at most this.
    pub tolerance: S,
    /// Receding-horizon lookahead `H` (required by the RH drivers).
    pub horizon_rh: Option<usize>,
    /// Defaults to the uniform policy.
    pub initial_policy: Option<Policy<S>>,
    pub trace_every: usize,
    pub averaging: Averaging,
}

impl<S: Scalar> SolverConfig<S> {
    pub fn new(concept: Concept, alpha: S) -> Self {
        Self {
            concept,
            alpha,
            beta: S::lit(0.95),
            max_iterations: 1000,
            tolerance: S::lit(1e-6),
            horizon_rh: None,
            initial_policy: None,
            trace_every: 1,
            averaging: Averaging::Geometric,
        }
    }

    pub fn with_beta(mut self, beta: S) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_max_iterations(mut self, k: usize) -> Self {
        self.max_iterations = k;
        self
    }

    pub fn with_tolerance(mut self, tolerance: S) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_horizon_rh(mut self, lookahead: usize) -> Self {
        self.horizon_rh = Some(lookahead);
        self
    }

    pub fn with_initial_policy(mut self, policy: Policy<S>) -> Self {
        self.initial_policy = Some(policy);
        self
    }

    pub fn with_trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn with_averaging(mut self, averaging: Averaging) -> Self {
        self.averaging = averaging;
        self
    }

    pub fn validate(&self, model: &MfgModel<S>) -> Result<()> {
        if !(self.beta > S::zero() && self.beta < S::one()) {
            return Err(MfgError::InvalidConfig {
                field: "beta",
                reason: format!("must lie in (0, 1), got {}", self.beta),
            });
        }
        if self.concept != Concept::Ne && !(self.alpha > S::zero() && self.alpha.is_finite()) {
            return Err(MfgError::InvalidConfig {
                field: "alpha",
                reason: format!("must be positive for {}, got {}", self.concept, self.alpha),
            });
        }
        if self.tolerance.is_nan() || self.tolerance < S::zero() {
            return Err(MfgError::InvalidConfig {
                field: "tolerance",
                reason: format!("must be nonnegative, got {}", self.tolerance),
            });
        }
        if self.trace_every == 0 {
            return Err(MfgError::InvalidConfig {
                field: "trace_every",
                reason: "must be positive".into(),
            });
        }
        if let Some(policy) = &self.initial_policy {
            policy.check_shape(model)?;
        }
        Ok(())
    }

    pub(crate) fn initial_policy_for(&self, model: &MfgModel<S>) -> Policy<S> {
        self.initial_policy
            .clone()
            .unwrap_or_else(|| Policy::uniform_for(model))
    }

    /// Lookahead required by the receding-horizon drivers.
    pub(crate) fn lookahead(&self) -> Result<usize> {
        match self.horizon_rh {
            Some(h) if h >= 1 => Ok(h),
            Some(h) => Err(MfgError::InvalidConfig {
                field: "horizon_rh",
                reason: format!("must be at least 1, got {h}"),
            }),
            None => Err(MfgError::InvalidConfig {
                field: "horizon_rh",
                reason: "required by the receding-horizon solvers".into(),
            }),
        }
    }
}

/// Output of a solver run.
#[derive(Debug, Clone)]
pub struct SolverResult<S> {
    /// Last iterate; for the RH drivers the implemented (diagonal) policy.
    pub final_policy: Policy<S>,
    pub trace: ConvergenceTrace,
    pub converged: bool,
    /// Index of the returned iterate. The sequential RH driver reports the
    /// sum over subgames, the parallel one the global iteration count.
    pub iterations_used: usize,
    pub ensemble: Option<PolicyEnsemble<S>>,
    pub implemented_policy: Option<Policy<S>>,
    /// Iterations each RH subgame needed to reach tolerance.
    pub subgame_iterations: Vec<usize>,
    /// Per-subgame traces of the sequential RH driver.
    pub subgame_traces: Vec<ConvergenceTrace>,
}

impl<S> SolverResult<S> {
    fn plain(final_policy: Policy<S>, trace: ConvergenceTrace, converged: bool, k: usize) -> Self {
        Self {
            final_policy,
            trace,
            converged,
            iterations_used: k,
            ensemble: None,
            implemented_policy: None,
            subgame_iterations: Vec::new(),
            subgame_traces: Vec::new(),
        }
    }
}

pub(crate) struct TraceRecorder {
    started: Instant,
    every: usize,
    trace: ConvergenceTrace,
}

impl TraceRecorder {
    pub(crate) fn new(every: usize) -> Self {
        Self {
            started: Instant::now(),
            every,
            trace: ConvergenceTrace::new(),
        }
    }

    pub(crate) fn wants(&self, k: usize, last: bool) -> bool {
        last || k.is_multiple_of(self.every)
    }

    pub(crate) fn record<S: Scalar>(&mut self, k: usize, snapshot: &MetricSnapshot<S>) {
        self.trace.push(TraceRow {
            iteration: k,
            delta_qpire: snapshot.delta_qpire.to_f64_lossy(),
            delta_qstarre: snapshot.delta_qstarre.to_f64_lossy(),
            delta_re: snapshot.delta_re.to_f64_lossy(),
            exploitability: snapshot.exploitability.to_f64_lossy(),
            reg_exploitability: snapshot.reg_exploitability.to_f64_lossy(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        });
    }

    pub(crate) fn finish(self) -> ConvergenceTrace {
        self.trace
    }
}
