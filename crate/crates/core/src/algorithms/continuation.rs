use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::gfp::gfp;
use super::{SolverConfig, SolverResult};
use crate::error::{MfgError, Result};
use crate::metrics::{delta_equilibrium, evaluate_all, Concept};
use crate::model::{MfgModel, Policy, QFunction, TraceRow};
use crate::operators::{mean_field_forward, q_optimal, q_policy, q_soft, softmax_policy};
use crate::scalar::Scalar;

/// Largest number of unknowns `T * |X| * |U|` accepted by the dense Newton solver.
pub const MAX_NEWTON_UNKNOWNS: usize = 4096;

/// Settings of the Newton refinement and the temperature continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Stop once `max |q - Phi(q)|` is at most this.
    pub residual_tol: f64,
    /// Temperature ratio between consecutive continuation stages.
    pub step_ratio: f64,
    /// How often one stage may be retried with a smaller temperature step.
    pub max_refinements: usize,
    /// Doublings of the temperature tried when looking for a fictitious play anchor.
    pub max_anchor_doublings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            residual_tol: 1e-11,
            step_ratio: 0.8,
            max_refinements: 8,
            max_anchor_doublings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome<S> {
    pub q: QFunction<S>,
    pub policy: Policy<S>,
    pub residual: S,
    pub iterations: usize,
    pub converged: bool,
}

/// Concept value map `Phi(q)`: the concept's Q-function under the policy
/// `softmax(q / alpha)` and the flow that policy induces.
pub fn concept_q_map<S: Scalar>(
    model: &MfgModel<S>,
    concept: Concept,
    alpha: S,
    q: &QFunction<S>,
) -> Result<QFunction<S>> {
    let policy = softmax_policy(q, alpha)?;
    let mf = mean_field_forward(model, &policy)?;
    match concept {
        Concept::QpiRe => q_policy(model, &mf, &policy),
        Concept::QstarRe => q_optimal(model, &mf),
        Concept::Re => q_soft(model, &mf, alpha),
        Concept::Ne => Err(MfgError::InvalidConfig {
            field: "concept",
            reason: "the Newton solver needs a regularized concept".into(),
        }),
    }
}

fn residual<S: Scalar>(
    model: &MfgModel<S>,
    concept: Concept,
    alpha: S,
    shape: (usize, usize, usize),
    q: &[f64],
) -> Result<DVector<f64>> {
    let qf = QFunction::from_flat(
        shape.0,
        shape.1,
        shape.2,
        q.iter().map(|&v| S::lit(v)).collect(),
    )?;
    let image = concept_q_map(model, concept, alpha, &qf)?;
    Ok(DVector::from_iterator(
        q.len(),
        q.iter()
            .zip(image.as_flat())
            .map(|(&a, &b)| a - b.to_f64_lossy()),
    ))
}

/// Solves `q = Phi(q)` by Newton's method from `q0`.
///
/// The Jacobian is dense and built from central differences, one column per
/// unknown, so the solver is meant for small games. A backtracking line
/// search on the max-norm residual guards each step.
pub fn newton_fixed_point<S: Scalar>(
    model: &MfgModel<S>,
    concept: Concept,
    alpha: S,
    q0: &QFunction<S>,
    options: &NewtonOptions,
) -> Result<NewtonOutcome<S>> {
    let shape = (q0.horizon(), q0.num_states(), q0.num_actions());
    let n = q0.as_flat().len();
    if n > MAX_NEWTON_UNKNOWNS {
        return Err(MfgError::InvalidConfig {
            field: "newton",
            reason: format!("{n} unknowns exceed the dense solver limit {MAX_NEWTON_UNKNOWNS}"),
        });
    }
    let tol = options.residual_tol.max(S::tol(0.0).to_f64_lossy());
    // The map sees `q` only through `q / alpha`, so the difference step scales with alpha.
    let spacing = S::epsilon().to_f64_lossy().cbrt() * alpha.to_f64_lossy().min(1.0);
    let mut q: Vec<f64> = q0.as_flat().iter().map(|v| v.to_f64_lossy()).collect();
    let mut f = residual(model, concept, alpha, shape, &q)?;
    let mut norm = f.amax();
    let mut iterations = 0;
    while norm > tol && iterations < options.max_iterations {
        let columns = (0..n)
            .into_par_iter()
            .map(|k| {
                let h = spacing * (1.0 + q[k].abs());
                let mut plus = q.clone();
                plus[k] += h;
                let mut minus = q.clone();
                minus[k] -= h;
                let diff = residual(model, concept, alpha, shape, &plus)?
                    - residual(model, concept, alpha, shape, &minus)?;
                Ok(diff / (2.0 * h))
            })
            .collect::<Result<Vec<_>>>()?;
        let jacobian = DMatrix::from_columns(&columns);
        let Some(step) = jacobian.lu().solve(&(-&f)) else {
            break;
        };
        let mut t = 1.0;
        let (next, next_f) = loop {
            let candidate: Vec<f64> = q.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let cf = residual(model, concept, alpha, shape, &candidate)?;
            if cf.amax() < norm * (1.0 - 1e-4 * t) || t < 1e-6 {
                break (candidate, cf);
            }
            t *= 0.5;
        };
        iterations += 1;
        let next_norm = next_f.amax();
        if !(next_norm < norm) {
            break;
        }
        q = next;
        f = next_f;
        norm = next_norm;
    }
    let q = QFunction::from_flat(
        shape.0,
        shape.1,
        shape.2,
        q.into_iter().map(S::lit).collect(),
    )?;
    let policy = softmax_policy(&q, alpha)?;
    Ok(NewtonOutcome {
        q,
        policy,
        residual: S::lit(norm),
        iterations,
        converged: norm <= tol,
    })
}

/// Follows the fixed point from `(alpha_from, q_from)` to `alpha_to` in
/// geometric temperature steps, each solved by [`newton_fixed_point`] from
/// the previous stage. Failed stages are retried with smaller steps.
pub fn continue_in_temperature<S: Scalar>(
    model: &MfgModel<S>,
    concept: Concept,
    alpha_from: S,
    q_from: &QFunction<S>,
    alpha_to: S,
    options: &NewtonOptions,
) -> Result<NewtonOutcome<S>> {
    if !(alpha_from > S::zero() && alpha_to > S::zero()) {
        return Err(MfgError::NonPositiveTemperature(
            alpha_from.min(alpha_to).to_f64_lossy(),
        ));
    }
    let base_ratio = options.step_ratio;
    if !(base_ratio > 0.0 && base_ratio < 1.0) {
        return Err(MfgError::InvalidConfig {
            field: "step_ratio",
            reason: format!("must lie in (0, 1), got {base_ratio}"),
        });
    }
    let mut alpha = alpha_from;
    let mut q = q_from.clone();
    let mut total_iterations = 0;
    let mut ratio = base_ratio;
    let mut refinements = 0;
    loop {
        let next_alpha = if alpha_to < alpha {
            (alpha * S::lit(ratio)).max(alpha_to)
        } else {
            (alpha / S::lit(ratio)).min(alpha_to)
        };
        let stage = newton_fixed_point(model, concept, next_alpha, &q, options)?;
        total_iterations += stage.iterations;
        if stage.converged {
            alpha = next_alpha;
            q = stage.q.clone();
            ratio = base_ratio;
            refinements = 0;
            if alpha == alpha_to {
                return Ok(NewtonOutcome {
                    iterations: total_iterations,
                    ..stage
                });
            }
        } else if refinements < options.max_refinements {
            refinements += 1;
            ratio = ratio.sqrt();
            log::warn!("continuation stage at alpha {next_alpha} failed (residual {}, {} iterations); step ratio now {ratio}", stage.residual, stage.iterations);
        } else {
            return Ok(NewtonOutcome {
                iterations: total_iterations,
                ..stage
            });
        }
    }
}

/// Outcome of [`solve_with_continuation`].
#[derive(Debug, Clone)]
pub struct ContinuationResult<S> {
    pub result: SolverResult<S>,
    /// Whether the returned policy comes from Newton continuation rather than fictitious play.
    pub refined: bool,
    /// Temperature at which fictitious play converged and continuation started.
    pub anchor_alpha: Option<f64>,
    pub newton_iterations: usize,
}

/// Fictitious play, with a Newton continuation fallback for temperatures
/// at which fictitious play does not reach the tolerance.
///
/// On failure the temperature is doubled until fictitious play converges;
/// that equilibrium is then followed back down to `config.alpha`. The
/// result's trace is the fictitious play trace followed by one row for the
/// refined policy.
pub fn solve_with_continuation<S: Scalar>(
    model: &MfgModel<S>,
    config: &SolverConfig<S>,
    options: &NewtonOptions,
) -> Result<ContinuationResult<S>> {
    let direct = gfp(model, config)?;
    if direct.converged || config.concept == Concept::Ne {
        return Ok(ContinuationResult {
            result: direct,
            refined: false,
            anchor_alpha: None,
            newton_iterations: 0,
        });
    }

    let mut anchor = None;
    let mut alpha = config.alpha;
    for _ in 0..options.max_anchor_doublings {
        alpha = alpha + alpha;
        let run = gfp(
            model,
            &SolverConfig {
                alpha,
                ..config.clone()
            },
        )?;
        if run.converged {
            anchor = Some((alpha, run.final_policy));
            break;
        }
    }
    let Some((anchor_alpha, anchor_policy)) = anchor else {
        log::warn!("no temperature up to {alpha} lets fictitious play converge");
        return Ok(ContinuationResult {
            result: direct,
            refined: false,
            anchor_alpha: None,
            newton_iterations: 0,
        });
    };

    let mf = mean_field_forward(model, &anchor_policy)?;
    let q_anchor = match config.concept {
        Concept::QpiRe => q_policy(model, &mf, &anchor_policy)?,
        Concept::QstarRe => q_optimal(model, &mf)?,
        _ => q_soft(model, &mf, anchor_alpha)?,
    };
    let outcome = continue_in_temperature(
        model,
        config.concept,
        anchor_alpha,
        &q_anchor,
        config.alpha,
        options,
    )?;

    let delta = delta_equilibrium(model, &outcome.policy, config.alpha, config.concept)?;
    let mut trace = direct.trace.clone();
    let iteration = direct.iterations_used + 1;
    let snapshot = evaluate_all(model, &outcome.policy, config.alpha)?;
    let elapsed = trace.rows().last().map_or(0.0, |r| r.wall_time_seconds);
    trace.push(TraceRow {
        iteration,
        delta_qpire: snapshot.delta_qpire.to_f64_lossy(),
        delta_qstarre: snapshot.delta_qstarre.to_f64_lossy(),
        delta_re: snapshot.delta_re.to_f64_lossy(),
        exploitability: snapshot.exploitability.to_f64_lossy(),
        reg_exploitability: snapshot.reg_exploitability.to_f64_lossy(),
        wall_time_seconds: elapsed,
    });
    Ok(ContinuationResult {
        result: SolverResult {
            final_policy: outcome.policy,
            trace,
            converged: delta <= config.tolerance,
            iterations_used: iteration,
            ..direct
        },
        refined: true,
        anchor_alpha: Some(anchor_alpha.to_f64_lossy()),
        newton_iterations: outcome.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{make_sis, SisParams};
    use crate::metrics::policy_distance;

    fn sis() -> MfgModel<f64> {
        make_sis(&SisParams {
            horizon: 8,
            ..SisParams::default()
        })
        .unwrap()
    }

    #[test]
    fn newton_agrees_with_fictitious_play() {
        let model = sis();
        for concept in [Concept::QpiRe, Concept::QstarRe, Concept::Re] {
            let config = SolverConfig::new(concept, 1.0)
                .with_tolerance(1e-10)
                .with_max_iterations(5000);
            let fp = gfp(&model, &config).unwrap();
            assert!(fp.converged);
            let zeros = QFunction::zeros(8, 2, 2);
            let newton =
                newton_fixed_point(&model, concept, 1.0, &zeros, &NewtonOptions::default())
                    .unwrap();
            assert!(newton.converged, "{concept}: residual {}", newton.residual);
            assert!(policy_distance(&newton.policy, &fp.final_policy).unwrap() < 1e-8);
            assert!(delta_equilibrium(&model, &newton.policy, 1.0, concept).unwrap() < 1e-9);
        }
    }

    #[test]
    fn continuation_reaches_target_temperature() {
        let model = sis();
        let zeros = QFunction::zeros(8, 2, 2);
        let start = newton_fixed_point(&model, Concept::Re, 2.0, &zeros, &NewtonOptions::default())
            .unwrap();
        let end = continue_in_temperature(
            &model,
            Concept::Re,
            2.0,
            &start.q,
            0.1,
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(end.converged);
        assert!(delta_equilibrium(&model, &end.policy, 0.1, Concept::Re).unwrap() < 1e-8);
    }

    #[test]
    fn ne_is_rejected() {
        let model = sis();
        let zeros = QFunction::zeros(8, 2, 2);
        assert!(
            newton_fixed_point(&model, Concept::Ne, 1.0, &zeros, &NewtonOptions::default())
                .is_err()
        );
    }

    #[test]
    fn converged_fictitious_play_is_returned_as_is() {
        let model = sis();
        let config = SolverConfig::new(Concept::Re, 1.0).with_tolerance(1e-3);
        let out = solve_with_continuation(&model, &config, &NewtonOptions::default()).unwrap();
        assert!(!out.refined);
        assert!(out.result.converged);
    }
}
