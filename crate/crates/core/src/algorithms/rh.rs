use rayon::prelude::*;

use super::gfp::{run_gfp, GfpState};
use super::{SolverConfig, SolverResult, TraceRecorder};
use crate::error::{MfgError, Result};
use crate::metrics::{evaluate_all, next_start_mf, MetricSnapshot};
use crate::model::{ConvergenceTrace, MfgModel, Policy, PolicyEnsemble, TraceRow};
use crate::operators::mean_field_forward;
use crate::scalar::Scalar;

/// Start times of the receding-horizon subgames.
///
/// `T - H + 1` windows; the last one reaches `T - 1` and supplies the
/// implemented policy for the remaining stages. A single full window when
/// `H >= T - 1`.
pub fn rh_start_times(horizon: usize, lookahead: usize) -> Vec<usize> {
    if lookahead + 1 >= horizon {
        vec![0]
    } else {
        (0..=horizon - lookahead).collect()
    }
}

/// The implemented policy of an ensemble: stage `t` is played by the member
/// started at `t`; stages past the last start use the last member that
/// covers them.
pub fn diagonal_policy<S: Scalar>(ensemble: &PolicyEnsemble<S>) -> Result<Policy<S>> {
    let members: Vec<&Policy<S>> = ensemble.members().iter().collect();
    diagonal_of(ensemble.total_horizon(), ensemble.start_times(), &members)
}

fn diagonal_of<S: Scalar>(
    total: usize,
    starts: &[usize],
    members: &[&Policy<S>],
) -> Result<Policy<S>> {
    let first = members.first().ok_or(MfgError::Empty("policy ensemble"))?;
    let (nx, nu) = (first.num_states(), first.num_actions());
    let mut probs = Vec::with_capacity(total * nx * nu);
    for t in 0..total {
        let (start, member) = starts
            .iter()
            .zip(members)
            .filter(|(&s, m)| s <= t && t < s + m.horizon())
            .max_by_key(|(&s, _)| s)
            .ok_or(MfgError::UncoveredTime(t))?;
        for x in 0..nx {
            probs.extend_from_slice(member.row(t - start, x));
        }
    }
    Ok(Policy::from_raw(total, nx, nu, probs))
}

/// Subgame iterates of one global iteration of [`rh_parallel_observed`].
#[derive(Debug)]
pub struct RhIterate<'a, S> {
    pub iteration: usize,
    pub total_horizon: usize,
    pub start_times: &'a [usize],
    pub members: Vec<&'a Policy<S>>,
}

impl<S: Scalar> RhIterate<'_, S> {
    /// Diagonal policy of the current iterates.
    pub fn implemented(&self) -> Result<Policy<S>> {
        diagonal_of(self.total_horizon, self.start_times, &self.members)
    }
}

fn finish_rh<S: Scalar>(
    lookahead: usize,
    model: &MfgModel<S>,
    starts: Vec<usize>,
    members: Vec<Policy<S>>,
    start_mfs: Vec<Vec<S>>,
) -> Result<(PolicyEnsemble<S>, Policy<S>)> {
    let ensemble = PolicyEnsemble::new(model.horizon(), lookahead, starts, members, start_mfs)?;
    let implemented = diagonal_policy(&ensemble)?;
    Ok((ensemble, implemented))
}

/// Sequential receding-horizon fictitious play.
///
/// Subgames are solved in order of start time; each one starts from the
/// distribution the previous subgame's returned policy induces one stage
/// after its own start.
pub fn rh_sequential<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
) -> Result<SolverResult<S>> {
    rh_sequential_observed(model, config, |_, _, _| {})
}

/// [`rh_sequential`] that hands every iterate to `observer` as
/// `(subgame index, iteration, policy)`.
pub fn rh_sequential_observed<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
    mut observer: impl FnMut(usize, usize, &Policy<S>),
) -> Result<SolverResult<S>> {
    config.validate(model)?;
    let lookahead = config.lookahead()?;
    let initial = config.initial_policy_for(model);
    let starts = rh_start_times(model.horizon(), lookahead);

    let mut start_mf = model.initial_mf().to_vec();
    let mut members = Vec::with_capacity(starts.len());
    let mut start_mfs = Vec::with_capacity(starts.len());
    let mut subgame_iterations = Vec::with_capacity(starts.len());
    let mut subgame_traces = Vec::with_capacity(starts.len());
    let mut trace = ConvergenceTrace::new();
    let mut offset = 0;
    let mut converged = true;

    for (i, &t) in starts.iter().enumerate() {
        let window = model.window(t, lookahead, &start_mf)?;
        let init = initial.slice_times(t, window.horizon())?;
        let run = run_gfp(window, init, config, &mut |k, p| observer(i, k, p))?;
        for row in run.trace.rows() {
            trace.push(TraceRow {
                iteration: offset + row.iteration,
                ..*row
            });
        }
        offset += run.iterations_used + 1;
        converged &= run.converged;
        subgame_iterations.push(run.iterations_used);
        subgame_traces.push(run.trace);
        let next = next_start_mf(model, t, &start_mf, &run.final_policy);
        start_mfs.push(std::mem::replace(&mut start_mf, next));
        members.push(run.final_policy);
    }

    let (ensemble, implemented) = finish_rh(lookahead, model, starts, members, start_mfs)?;
    Ok(SolverResult {
        final_policy: implemented.clone(),
        trace,
        converged,
        iterations_used: subgame_iterations.iter().sum(),
        ensemble: Some(ensemble),
        implemented_policy: Some(implemented),
        subgame_iterations,
        subgame_traces,
    })
}

/// Parallel receding-horizon fictitious play.
///
/// Every subgame advances one fictitious play step per global iteration.
/// At the start of each iteration the start distribution of subgame `t > 0`
/// is re-linked to what subgame `t - 1` induced after the previous
/// iteration, so the per-subgame steps are independent and run
/// concurrently.
pub fn rh_parallel<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
) -> Result<SolverResult<S>> {
    rh_parallel_observed(model, config, |_| Ok(()))
}

/// [`rh_parallel`] that hands the subgame iterates of every global
/// iteration to `observer`; an observer error aborts the run.
pub fn rh_parallel_observed<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
    mut observer: impl FnMut(&RhIterate<'_, S>) -> Result<()>,
) -> Result<SolverResult<S>> {
    config.validate(model)?;
    let lookahead = config.lookahead()?;
    let initial = config.initial_policy_for(model);
    let starts = rh_start_times(model.horizon(), lookahead);
    let initial_flow = mean_field_forward(model, &initial)?;

    let mut states = starts
        .iter()
        .map(|&t| {
            let window = model.window(t, lookahead, initial_flow.at(t))?;
            let init = initial.slice_times(t, window.horizon())?;
            GfpState::new(window, init)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut recorder = TraceRecorder::new(config.trace_every);
    let mut settled_at: Vec<Option<usize>> = vec![None; states.len()];
    let mut converged;
    let mut k = 0;
    loop {
        if k > 0 {
            let relinked = (1..states.len())
                .map(|i| {
                    let prev = &states[i - 1];
                    let start =
                        next_start_mf(model, starts[i - 1], prev.model.initial_mf(), &prev.policy);
                    model.window(starts[i], lookahead, &start)
                })
                .collect::<Result<Vec<_>>>()?;
            for (state, window) in states[1..].iter_mut().zip(relinked) {
                state.relink(window);
            }
        }

        let deltas = states
            .par_iter()
            .map(|s| s.delta(config))
            .collect::<Result<Vec<_>>>()?;
        for (slot, &delta) in settled_at.iter_mut().zip(&deltas) {
            if delta <= config.tolerance {
                slot.get_or_insert(k);
            } else {
                *slot = None;
            }
        }
        converged = settled_at.iter().all(Option::is_some);
        let last = converged || k == config.max_iterations;

        if recorder.wants(k, last) {
            let snapshots = states
                .par_iter()
                .map(|s| evaluate_all(&s.model, &s.policy, config.alpha))
                .collect::<Result<Vec<_>>>()?;
            let total = snapshots
                .iter()
                .fold(MetricSnapshot::zero(), |acc, s| acc.aggregate(s));
            recorder.record(k, &total);
        }
        observer(&RhIterate {
            iteration: k,
            total_horizon: model.horizon(),
            start_times: &starts,
            members: states.iter().map(|s| &s.policy).collect(),
        })?;

        if last {
            break;
        }
        states
            .par_iter_mut()
            .map(|s| s.step(config))
            .collect::<Result<Vec<_>>>()?;
        k += 1;
    }

    let subgame_iterations = settled_at.iter().map(|s| s.unwrap_or(k)).collect();
    let start_mfs = states
        .iter()
        .map(|s| s.model.initial_mf().to_vec())
        .collect();
    let members = states.into_iter().map(|s| s.policy).collect();
    let (ensemble, implemented) = finish_rh(lookahead, model, starts, members, start_mfs)?;
    Ok(SolverResult {
        final_policy: implemented.clone(),
        trace: recorder.finish(),
        converged,
        iterations_used: k,
        ensemble: Some(ensemble),
        implemented_policy: Some(implemented),
        subgame_iterations,
        subgame_traces: Vec::new(),
    })
}
