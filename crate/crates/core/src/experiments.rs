//! Experiment drivers behind the command line tool: temperature sweeps,
//! receding-horizon lookahead comparisons and sequential versus parallel
//! receding-horizon runs.

use crate::algorithms::{
    gfp, rh_parallel_observed, rh_sequential_observed, solve_with_continuation, NewtonOptions,
    SolverConfig, SolverResult,
};
use crate::error::Result;
use crate::metrics::{delta_equilibrium, policy_distance, Concept};
use crate::model::{MfgModel, Policy};
use crate::scalar::Scalar;

/// The three bounded-rationality concepts, in output order.
pub const REGULARIZED_CONCEPTS: [Concept; 3] = [Concept::QpiRe, Concept::QstarRe, Concept::Re];

/// One solved (temperature, concept) pair of a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry<S> {
    pub alpha: S,
    pub concept: Concept,
    pub converged: bool,
    /// Solved by temperature continuation after fictitious play stalled.
    pub refined: bool,
    pub delta: S,
    pub policy: Policy<S>,
}

impl<S: Scalar> SweepEntry<S> {
    /// Action distribution at `t = 0` in state `x`.
    pub fn initial_row(&self, x: usize) -> &[S] {
        self.policy.row(0, x)
    }
}

/// Solves every concept at every temperature.
///
/// Each entry is fictitious play run with `base` at that temperature; where it
/// does not reach `base.tolerance` the equilibrium is followed down from a
/// higher temperature by Newton continuation. Entries that still miss the
/// tolerance are returned with `converged == false`.
pub fn sweep_alpha<S: Scalar>(
    model: &MfgModel<S>,
    base: &SolverConfig<S>,
    alphas: &[S],
    concepts: &[Concept],
    options: &NewtonOptions,
) -> Result<Vec<SweepEntry<S>>> {
    let mut entries = Vec::with_capacity(alphas.len() * concepts.len());
    for &alpha in alphas {
        for &concept in concepts {
            let config = SolverConfig {
                concept,
                alpha,
                ..base.clone()
            };
            let solved = solve_with_continuation(model, &config, options)?;
            let delta = delta_equilibrium(model, &solved.result.final_policy, alpha, concept)?;
            if !solved.result.converged {
                log::warn!("{concept} at alpha {alpha} stopped at distance {delta}");
            }
            entries.push(SweepEntry {
                alpha,
                concept,
                converged: solved.result.converged,
                refined: solved.refined,
                delta,
                policy: solved.result.final_policy,
            });
        }
    }
    Ok(entries)
}

/// Distance of one lookahead's implemented policies to the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RhCurve {
    pub horizon: usize,
    /// `(global iteration, distance)` every `trace_every` iterations and at the end.
    pub points: Vec<(usize, f64)>,
    pub converged: bool,
}

impl RhCurve {
    pub fn final_distance(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.1)
    }
}

#[derive(Debug, Clone)]
pub struct RhComparison<S> {
    pub reference: SolverResult<S>,
    pub curves: Vec<RhCurve>,
}

/// Runs parallel receding-horizon fictitious play for every lookahead and
/// tracks the distance of its implemented policy to the full-horizon
/// equilibrium of `config.concept`, itself solved by fictitious play.
pub fn rh_compare<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
    horizons: &[usize],
) -> Result<RhComparison<S>> {
    let reference = gfp(model, config)?;
    if !reference.converged {
        log::warn!("reference equilibrium did not reach the tolerance");
    }
    let mut curves = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let rh_config = config.clone().with_horizon_rh(h);
        let mut points = Vec::new();
        let result = rh_parallel_observed(model, &rh_config, |it| {
            if it.iteration % config.trace_every == 0 {
                let d = policy_distance(&it.implemented()?, &reference.final_policy)?;
                points.push((it.iteration, d.to_f64_lossy()));
            }
            Ok(())
        })?;
        if points.last().map(|p| p.0) != Some(result.iterations_used) {
            let d = policy_distance(&result.final_policy, &reference.final_policy)?;
            points.push((result.iterations_used, d.to_f64_lossy()));
        }
        curves.push(RhCurve {
            horizon: h,
            points,
            converged: result.converged,
        });
    }
    Ok(RhComparison { reference, curves })
}

/// Iteration counts of the two receding-horizon drivers on the same problem.
#[derive(Debug, Clone)]
pub struct SeqParReport<S> {
    pub start_times: Vec<usize>,
    /// Iterations each subgame needed when solved one after another.
    pub sequential_iterations: Vec<usize>,
    /// Global iteration at which each subgame last reached the tolerance in the parallel run.
    pub parallel_iterations: Vec<usize>,
    pub sequential_total: usize,
    pub parallel_total: usize,
    /// The first subgame's iterates agree bitwise over the shorter of the two runs.
    pub first_subgame_identical: bool,
    pub sequential: SolverResult<S>,
    pub parallel: SolverResult<S>,
}

/// Solves the receding-horizon problem of `config` with both drivers.
pub fn rh_seq_vs_par<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
) -> Result<SeqParReport<S>> {
    let mut sequential_first = Vec::new();
    let sequential = rh_sequential_observed(model, config, |i, _, p| {
        if i == 0 {
            sequential_first.push(p.clone());
        }
    })?;
    let mut parallel_first = Vec::new();
    let parallel = rh_parallel_observed(model, config, |it| {
        if it.iteration < sequential_first.len() {
            parallel_first.push(it.members[0].clone());
        }
        Ok(())
    })?;
    let first_subgame_identical = sequential_first
        .iter()
        .zip(&parallel_first)
        .all(|(a, b)| a.as_flat() == b.as_flat());
    let start_times = sequential
        .ensemble
        .as_ref()
        .map(|e| e.start_times().to_vec())
        .unwrap_or_default();
    Ok(SeqParReport {
        start_times,
        sequential_iterations: sequential.subgame_iterations.clone(),
        parallel_iterations: parallel.subgame_iterations.clone(),
        sequential_total: sequential.subgame_iterations.iter().sum(),
        parallel_total: parallel.iterations_used,
        first_subgame_identical,
        sequential,
        parallel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{make_rps, make_sis, RpsParams, SisParams};
    use crate::model::Policy;

    #[test]
    fn sweep_extremes_on_rps() {
        let model = make_rps::<f64>(&RpsParams::default()).unwrap();
        let base = SolverConfig::new(Concept::Re, 1.0)
            .with_tolerance(1e-6)
            .with_max_iterations(2000)
            .with_trace_every(1000);
        let entries = sweep_alpha(
            &model,
            &base,
            &[1e6],
            &REGULARIZED_CONCEPTS,
            &NewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(entries.len(), 3);
        let uniform = Policy::<f64>::uniform(1, 1, 3);
        for e in &entries {
            assert!(e.converged);
            let l1: f64 = e
                .initial_row(0)
                .iter()
                .zip(uniform.row(0, 0))
                .map(|(a, b)| (a - b).abs())
                .sum();
            assert!(l1 < 1e-4, "{l1}");
        }
    }

    #[test]
    fn full_window_rh_matches_reference() {
        let model = make_sis::<f64>(&SisParams {
            horizon: 6,
            ..SisParams::default()
        })
        .unwrap();
        let config = SolverConfig::new(Concept::QpiRe, 1.0)
            .with_tolerance(1e-8)
            .with_max_iterations(5000)
            .with_trace_every(10);
        let cmp = rh_compare(&model, &config, &[5, 8]).unwrap();
        for curve in &cmp.curves {
            assert!(curve.converged);
            assert!(curve.final_distance() <= 1e-8 + 1e-6);
        }
    }

    #[test]
    fn seq_par_degenerate_cases() {
        let model = make_sis::<f64>(&SisParams {
            horizon: 6,
            ..SisParams::default()
        })
        .unwrap();
        let config = SolverConfig::new(Concept::Re, 1.0)
            .with_tolerance(1e-4)
            .with_horizon_rh(5);
        let single = rh_seq_vs_par(&model, &config).unwrap();
        assert_eq!(single.sequential_total, single.parallel_total);
        assert!(single.first_subgame_identical);

        let never = config
            .clone()
            .with_horizon_rh(2)
            .with_tolerance(f64::INFINITY);
        let report = rh_seq_vs_par(&model, &never).unwrap();
        assert_eq!(report.sequential_total, 0);
        assert_eq!(report.parallel_total, 0);
        assert_eq!(report.start_times, vec![0, 1, 2, 3, 4]);
    }
}
