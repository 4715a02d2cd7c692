use super::{SolverConfig, SolverResult, TraceRecorder};
use crate::error::Result;
use crate::metrics::{equilibrium_map, evaluate_all, exploitability, policy_distance, Concept};
use crate::model::MfgModel;
use crate::scalar::Scalar;

/// Generalized fixed-point iteration: `pi <- Gamma_Pi(Gamma_Q(Gamma_M(pi), pi))`.
///
/// Stops at the first iterate whose concept distance is within tolerance and
/// returns that iterate.
pub fn gfpi<S: Scalar>(model: &MfgModel<S>, config: &SolverConfig<S>) -> Result<SolverResult<S>> {
    config.validate(model)?;
    let mut recorder = TraceRecorder::new(config.trace_every);
    let mut policy = config.initial_policy_for(model);
    let mut converged;
    let mut k = 0;
    loop {
        let next = equilibrium_map(model, &policy, config.concept, config.alpha)?;
        let delta = match config.concept {
            Concept::Ne => exploitability(model, &policy)?,
            _ => policy_distance(&policy, &next)?,
        };
        converged = delta <= config.tolerance;
        let last = converged || k == config.max_iterations;
        if recorder.wants(k, last) {
            recorder.record(k, &evaluate_all(model, &policy, config.alpha)?);
        }
        if last {
            break;
        }
        policy = next;
        k += 1;
    }
    Ok(SolverResult::plain(policy, recorder.finish(), converged, k))
}
