//! Fixed-point building blocks: the mean field map, the three value
//! recursions, the policy maps and the objectives.
//!
//! Windowed (receding-horizon) variants are obtained by running the same
//! operators on [`MfgModel::window`] sub-games.

use crate::error::{MfgError, Result};
use crate::model::{normalize_in_place, MeanFieldFlow, MfgModel, Policy, QFunction};
use crate::scalar::Scalar;

fn check_alpha<S: Scalar>(alpha: S) -> Result<()> {
    if alpha > S::zero() && alpha.is_finite() {
        Ok(())
    } else {
        Err(MfgError::NonPositiveTemperature(alpha.to_f64_lossy()))
    }
}

/// `alpha * log(sum_i exp(v_i / alpha))`, stabilized by shifting with the row max.
pub fn log_sum_exp<S: Scalar>(values: &[S], alpha: S) -> Result<S> {
    check_alpha(alpha)?;
    if values.is_empty() {
        return Err(MfgError::Empty("log-sum-exp input"));
    }
    Ok(lse_unchecked(values, alpha))
}

fn lse_unchecked<S: Scalar>(values: &[S], alpha: S) -> S {
    let max = values.iter().copied().fold(S::neg_infinity(), S::max);
    let sum: S = values.iter().map(|&v| ((v - max) / alpha).exp()).sum();
    max + alpha * sum.ln()
}

/// Gradient of [`log_sum_exp`]: `softmax(v / alpha)`.
pub fn softmax<S: Scalar>(values: &[S], alpha: S) -> Result<Vec<S>> {
    check_alpha(alpha)?;
    if values.is_empty() {
        return Err(MfgError::Empty("softmax input"));
    }
    let mut out = values.to_vec();
    softmax_into(values, alpha, &mut out);
    Ok(out)
}

fn softmax_into<S: Scalar>(values: &[S], alpha: S, out: &mut [S]) {
    let max = values.iter().copied().fold(S::neg_infinity(), S::max);
    for (o, &v) in out.iter_mut().zip(values) {
        *o = ((v - max) / alpha).exp();
    }
    normalize_in_place(out);
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy<S: Scalar>(row: &[S]) -> S {
    row.iter()
        .filter(|&&p| p > S::zero())
        .map(|&p| -p * p.ln())
        .sum()
}

/// One forward step of the mean field: `mu_{t+1}(x') = sum_x mu_t(x) sum_u pi(u|x) p_t(x'|x,u,mu_t)`,
/// with `policy_row(x)` giving the stage-`t` action distribution. The result
/// is re-normalized.
pub(crate) fn forward_step<'a, S: Scalar>(
    model: &MfgModel<S>,
    t: usize,
    mu: &[S],
    policy_row: impl Fn(usize) -> &'a [S],
    out: &mut [S],
) {
    let mut kernel = vec![S::zero(); model.num_states()];
    out.iter_mut().for_each(|v| *v = S::zero());
    for (x, &mass) in mu.iter().enumerate() {
        if mass == S::zero() {
            continue;
        }
        for (u, &prob) in policy_row(x).iter().enumerate() {
            if prob == S::zero() {
                continue;
            }
            model.transition(t, x, u, mu, &mut kernel);
            let w = mass * prob;
            for (o, &p) in out.iter_mut().zip(&kernel) {
                *o = *o + w * p;
            }
        }
    }
    normalize_in_place(out);
}

/// The mean field induced by `policy` from the model's initial distribution.
pub fn mean_field_forward<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
) -> Result<MeanFieldFlow<S>> {
    policy.check_shape(model)?;
    let nx = model.num_states();
    let mut mass = vec![S::zero(); model.horizon() * nx];
    mass[..nx].copy_from_slice(model.initial_mf());
    for t in 0..model.horizon() - 1 {
        let (head, tail) = mass.split_at_mut((t + 1) * nx);
        forward_step(
            model,
            t,
            &head[t * nx..],
            |x| policy.row(t, x),
            &mut tail[..nx],
        );
    }
    Ok(MeanFieldFlow::from_raw(model.horizon(), nx, mass))
}

/// Mean field over the window `{t_start, ..., min(T-1, t_start + lookahead)}`
/// started from `mu_start`; `policy` covers exactly the window's stages.
pub fn mean_field_forward_windowed<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    t_start: usize,
    mu_start: &[S],
    lookahead: usize,
) -> Result<MeanFieldFlow<S>> {
    let window = model.window(t_start, lookahead, mu_start)?;
    mean_field_forward(&window, policy)
}

fn backward_recursion<S: Scalar>(
    model: &MfgModel<S>,
    mf: &MeanFieldFlow<S>,
    mut state_value: impl FnMut(usize, usize, &[S]) -> S,
) -> Result<QFunction<S>> {
    mf.check_shape(model)?;
    let (horizon, nx, nu) = (model.horizon(), model.num_states(), model.num_actions());
    let mut q = QFunction::zeros(horizon, nx, nu);
    let mut next_values = vec![S::zero(); nx];
    let mut kernel = vec![S::zero(); nx];
    for t in (0..horizon).rev() {
        let mu = mf.at(t);
        for x in 0..nx {
            for u in 0..nu {
                let mut value = model.reward(t, x, u, mu);
                if t + 1 < horizon {
                    model.transition(t, x, u, mu, &mut kernel);
                    value = value
                        + kernel
                            .iter()
                            .zip(&next_values)
                            .map(|(&p, &v)| p * v)
                            .sum::<S>();
                }
                q.row_mut(t, x)[u] = value;
            }
        }
        if t > 0 {
            for (x, slot) in next_values.iter_mut().enumerate() {
                *slot = state_value(t, x, q.row(t, x));
            }
        }
    }
    Ok(q)
}

/// Policy evaluation `Q^pi` under a fixed mean field.
///
/// The successor value at time `t+1` is weighted by `pi_{t+1}`, the policy
/// that is actually played at the successor stage.
pub fn q_policy<S: Scalar>(
    model: &MfgModel<S>,
    mf: &MeanFieldFlow<S>,
    policy: &Policy<S>,
) -> Result<QFunction<S>> {
    policy.check_shape(model)?;
    backward_recursion(model, mf, |t, x, row| {
        policy.row(t, x).iter().zip(row).map(|(&p, &q)| p * q).sum()
    })
}

/// Optimal Bellman recursion `Q*` under a fixed mean field.
pub fn q_optimal<S: Scalar>(model: &MfgModel<S>, mf: &MeanFieldFlow<S>) -> Result<QFunction<S>> {
    backward_recursion(model, mf, |_, _, row| {
        row.iter().copied().fold(S::neg_infinity(), S::max)
    })
}

/// Smooth-maximum (soft) Bellman recursion at temperature `alpha`.
pub fn q_soft<S: Scalar>(
    model: &MfgModel<S>,
    mf: &MeanFieldFlow<S>,
    alpha: S,
) -> Result<QFunction<S>> {
    check_alpha(alpha)?;
    backward_recursion(model, mf, |_, _, row| lse_unchecked(row, alpha))
}

/// Deterministic argmax policy; ties go to the lowest action index.
pub fn greedy_policy<S: Scalar>(q: &QFunction<S>) -> Policy<S> {
    let (horizon, nx, nu) = (q.horizon(), q.num_states(), q.num_actions());
    let mut probs = vec![S::zero(); horizon * nx * nu];
    for t in 0..horizon {
        for x in 0..nx {
            let row = q.row(t, x);
            let mut best = 0;
            for u in 1..nu {
                if row[u] > row[best] {
                    best = u;
                }
            }
            probs[(t * nx + x) * nu + best] = S::one();
        }
    }
    Policy::from_raw(horizon, nx, nu, probs)
}

/// Softmax (Boltzmann) policy `pi(u|x) ∝ exp(Q(x,u) / alpha)`.
pub fn softmax_policy<S: Scalar>(q: &QFunction<S>, alpha: S) -> Result<Policy<S>> {
    check_alpha(alpha)?;
    let (horizon, nx, nu) = (q.horizon(), q.num_states(), q.num_actions());
    let mut probs = vec![S::zero(); horizon * nx * nu];
    for t in 0..horizon {
        for x in 0..nx {
            let start = (t * nx + x) * nu;
            softmax_into(q.row(t, x), alpha, &mut probs[start..start + nu]);
        }
    }
    Ok(Policy::from_raw(horizon, nx, nu, probs))
}

/// Expected stage sum of a deviating agent playing `deviating` against the
/// frozen flow `mf`, optionally with `entropy_weight * H(pi(.|x))` added.
fn deviation_value<S: Scalar>(
    model: &MfgModel<S>,
    deviating: &Policy<S>,
    mf: &MeanFieldFlow<S>,
    entropy_weight: S,
) -> Result<S> {
    deviating.check_shape(model)?;
    mf.check_shape(model)?;
    let nx = model.num_states();
    let mut occupancy = model.initial_mf().to_vec();
    let mut next = vec![S::zero(); nx];
    let mut kernel = vec![S::zero(); nx];
    let mut total = S::zero();
    for t in 0..model.horizon() {
        let mu = mf.at(t);
        let last = t + 1 == model.horizon();
        next.iter_mut().for_each(|v| *v = S::zero());
        for (x, &rho) in occupancy.iter().enumerate() {
            if rho == S::zero() {
                continue;
            }
            let row = deviating.row(t, x);
            let mut stage = S::zero();
            for (u, &prob) in row.iter().enumerate() {
                if prob == S::zero() {
                    continue;
                }
                stage = stage + prob * model.reward(t, x, u, mu);
                if !last {
                    model.transition(t, x, u, mu, &mut kernel);
                    let w = rho * prob;
                    for (n, &p) in next.iter_mut().zip(&kernel) {
                        *n = *n + w * p;
                    }
                }
            }
            if entropy_weight != S::zero() {
                stage = stage + entropy_weight * entropy(row);
            }
            total = total + rho * stage;
        }
        std::mem::swap(&mut occupancy, &mut next);
    }
    Ok(total)
}

/// `J(pi_hat, pi)` with the population flow `mf` supplied by the caller.
pub fn objective<S: Scalar>(
    model: &MfgModel<S>,
    deviating: &Policy<S>,
    mf: &MeanFieldFlow<S>,
) -> Result<S> {
    deviation_value(model, deviating, mf, S::zero())
}

/// Entropy-regularized objective `J^RE_alpha(pi_hat, pi)`.
pub fn objective_regularized<S: Scalar>(
    model: &MfgModel<S>,
    deviating: &Policy<S>,
    mf: &MeanFieldFlow<S>,
    alpha: S,
) -> Result<S> {
    check_alpha(alpha)?;
    deviation_value(model, deviating, mf, alpha)
}

/// Receding-horizon objective of the window starting at `t_start`.
///
/// `deviating` and `mf` cover the window's stages; the deviator starts from
/// `mf`'s first row. `alpha = 0` gives the unregularized objective.
pub fn objective_windowed<S: Scalar>(
    model: &MfgModel<S>,
    deviating: &Policy<S>,
    mf: &MeanFieldFlow<S>,
    t_start: usize,
    lookahead: usize,
    alpha: S,
) -> Result<S> {
    if alpha < S::zero() || !alpha.is_finite() {
        return Err(MfgError::NonPositiveTemperature(alpha.to_f64_lossy()));
    }
    if mf.num_states() != model.num_states() {
        return Err(MfgError::DimensionMismatch {
            what: "mean field states",
            expected: model.num_states(),
            actual: mf.num_states(),
        });
    }
    let window = model.window(t_start, lookahead, mf.at(0))?;
    deviation_value(&window, deviating, mf, alpha)
}
