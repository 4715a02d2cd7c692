//! Exploitability and distance-to-equilibrium functionals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{MeanFieldFlow, MfgModel, Policy, PolicyEnsemble};
use crate::operators::{
    forward_step, greedy_policy, log_sum_exp, mean_field_forward, objective, objective_regularized,
    q_optimal, q_policy, q_soft, softmax_policy,
};
use crate::scalar::Scalar;

/// Stored and recomputed ensemble start distributions may differ by this much.
pub const CHAINING_TOL: f64 = 1e-9;

/// Equilibrium concept selecting the value recursion and policy map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concept {
    /// Nash: greedy policy on `Q*`.
    Ne,
    /// Logit quantal response: softmax of the policy's own values `Q^pi`.
    QpiRe,
    /// Boltzmann: softmax of the optimal values `Q*`.
    QstarRe,
    /// Entropy-regularized: softmax of the soft values.
    Re,
}

impl Concept {
    pub const REGULARIZED: [Concept; 3] = [Concept::QpiRe, Concept::QstarRe, Concept::Re];

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::Ne => "ne",
            Concept::QpiRe => "qpi_re",
            Concept::QstarRe => "qstar_re",
            Concept::Re => "re",
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Concept {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ne" | "nash" => Ok(Concept::Ne),
            "qpi_re" | "qpire" => Ok(Concept::QpiRe),
            "qstar_re" | "qstarre" => Ok(Concept::QstarRe),
            "re" => Ok(Concept::Re),
            other => Err(MfgError::InvalidConfig {
                field: "concept",
                reason: format!("unknown concept `{other}` (expected ne, qpi_re, qstar_re or re)"),
            }),
        }
    }
}

/// `max_t max_x sum_u |a - b|`.
pub fn policy_distance<S: Scalar>(a: &Policy<S>, b: &Policy<S>) -> Result<S> {
    let dims = [
        ("policy horizon", a.horizon(), b.horizon()),
        ("policy states", a.num_states(), b.num_states()),
        ("policy actions", a.num_actions(), b.num_actions()),
    ];
    for (what, expected, actual) in dims {
        if expected != actual {
            return Err(MfgError::DimensionMismatch {
                what,
                expected,
                actual,
            });
        }
    }
    let mut worst = S::zero();
    for t in 0..a.horizon() {
        for x in 0..a.num_states() {
            let d: S = a
                .row(t, x)
                .iter()
                .zip(b.row(t, x))
                .map(|(&p, &q)| (p - q).abs())
                .sum();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

fn clamp_gap<S: Scalar>(gap: S, what: &str) -> S {
    if gap < S::lit(-1e-6) {
        log::warn!("{what} evaluated to {gap}; clamping to zero");
    }
    gap.max(S::zero())
}

/// Best-response value `sum_x mu0(x) max_u Q*_0(x, u)`.
fn best_response_value<S: Scalar>(model: &MfgModel<S>, mf: &MeanFieldFlow<S>) -> Result<S> {
    let q = q_optimal(model, mf)?;
    Ok(model
        .initial_mf()
        .iter()
        .enumerate()
        .map(|(x, &m)| m * q.row(0, x).iter().copied().fold(S::neg_infinity(), S::max))
        .sum())
}

fn soft_best_response_value<S: Scalar>(
    model: &MfgModel<S>,
    mf: &MeanFieldFlow<S>,
    alpha: S,
) -> Result<S> {
    let q = q_soft(model, mf, alpha)?;
    let mut total = S::zero();
    for (x, &m) in model.initial_mf().iter().enumerate() {
        total = total + m * log_sum_exp(q.row(0, x), alpha)?;
    }
    Ok(total)
}

/// Exploitability of `policy` against the flow `mf` it is assumed to induce.
pub(crate) fn exploitability_at<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    mf: &MeanFieldFlow<S>,
) -> Result<S> {
    let gap = best_response_value(model, mf)? - objective(model, policy, mf)?;
    Ok(clamp_gap(gap, "exploitability"))
}

pub(crate) fn exploitability_regularized_at<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    mf: &MeanFieldFlow<S>,
    alpha: S,
) -> Result<S> {
    let gap = soft_best_response_value(model, mf, alpha)?
        - objective_regularized(model, policy, mf, alpha)?;
    Ok(clamp_gap(gap, "regularized exploitability"))
}

/// `max_pi_hat J(pi_hat, pi) - J(pi, pi)`, computed exactly by backward induction.
pub fn exploitability<S: Scalar>(model: &MfgModel<S>, policy: &Policy<S>) -> Result<S> {
    let mf = mean_field_forward(model, policy)?;
    exploitability_at(model, policy, &mf)
}

/// Entropy-regularized exploitability at temperature `alpha`.
pub fn exploitability_regularized<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    alpha: S,
) -> Result<S> {
    let mf = mean_field_forward(model, policy)?;
    exploitability_regularized_at(model, policy, &mf, alpha)
}

/// Response policy `Gamma_Pi(Gamma_Q(mf, policy))` of a concept against a fixed flow.
pub fn best_response<S: Scalar>(
    model: &MfgModel<S>,
    mf: &MeanFieldFlow<S>,
    policy: &Policy<S>,
    concept: Concept,
    alpha: S,
) -> Result<Policy<S>> {
    match concept {
        Concept::Ne => Ok(greedy_policy(&q_optimal(model, mf)?)),
        Concept::QpiRe => softmax_policy(&q_policy(model, mf, policy)?, alpha),
        Concept::QstarRe => softmax_policy(&q_optimal(model, mf)?, alpha),
        Concept::Re => softmax_policy(&q_soft(model, mf, alpha)?, alpha),
    }
}

/// The fixed-point map of a concept: `Gamma_Pi(Gamma_Q(Gamma_M(pi), pi))`.
pub fn equilibrium_map<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    concept: Concept,
    alpha: S,
) -> Result<Policy<S>> {
    let mf = mean_field_forward(model, policy)?;
    best_response(model, &mf, policy, concept, alpha)
}

/// Distance of `policy` to the chosen equilibrium.
///
/// The regularized concepts return the policy distance to the image of the
/// concept's fixed-point map; `Ne` returns the exploitability.
pub fn delta_equilibrium<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    alpha: S,
    concept: Concept,
) -> Result<S> {
    let mf = mean_field_forward(model, policy)?;
    delta_at(model, policy, &mf, alpha, concept)
}

fn delta_at<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    mf: &MeanFieldFlow<S>,
    alpha: S,
    concept: Concept,
) -> Result<S> {
    match concept {
        Concept::Ne => exploitability_at(model, policy, mf),
        _ => policy_distance(policy, &best_response(model, mf, policy, concept, alpha)?),
    }
}

/// All five metrics a trace row records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSnapshot<S> {
    pub delta_qpire: S,
    pub delta_qstarre: S,
    pub delta_re: S,
    pub exploitability: S,
    pub reg_exploitability: S,
}

impl<S: Scalar> MetricSnapshot<S> {
    /// Value tracked by a concept's stopping rule.
    pub fn for_concept(&self, concept: Concept) -> S {
        match concept {
            Concept::Ne => self.exploitability,
            Concept::QpiRe => self.delta_qpire,
            Concept::QstarRe => self.delta_qstarre,
            Concept::Re => self.delta_re,
        }
    }

    /// Windowed receding-horizon aggregate: distances by max, exploitabilities by sum.
    pub(crate) fn aggregate(&self, other: &Self) -> Self {
        Self {
            delta_qpire: self.delta_qpire.max(other.delta_qpire),
            delta_qstarre: self.delta_qstarre.max(other.delta_qstarre),
            delta_re: self.delta_re.max(other.delta_re),
            exploitability: self.exploitability + other.exploitability,
            reg_exploitability: self.reg_exploitability + other.reg_exploitability,
        }
    }

    pub(crate) fn zero() -> Self {
        Self {
            delta_qpire: S::zero(),
            delta_qstarre: S::zero(),
            delta_re: S::zero(),
            exploitability: S::zero(),
            reg_exploitability: S::zero(),
        }
    }
}

/// Evaluates every metric of `policy`, sharing one mean field evaluation.
/// With a nonpositive `alpha` the regularized entries are `NaN`.
pub fn evaluate_all<S: Scalar>(
    model: &MfgModel<S>,
    policy: &Policy<S>,
    alpha: S,
) -> Result<MetricSnapshot<S>> {
    let mf = mean_field_forward(model, policy)?;
    let exploitability = exploitability_at(model, policy, &mf)?;
    if !(alpha > S::zero()) {
        return Ok(MetricSnapshot {
            delta_qpire: S::nan(),
            delta_qstarre: S::nan(),
            delta_re: S::nan(),
            exploitability,
            reg_exploitability: S::nan(),
        });
    }
    Ok(MetricSnapshot {
        delta_qpire: delta_at(model, policy, &mf, alpha, Concept::QpiRe)?,
        delta_qstarre: delta_at(model, policy, &mf, alpha, Concept::QstarRe)?,
        delta_re: delta_at(model, policy, &mf, alpha, Concept::Re)?,
        exploitability,
        reg_exploitability: exploitability_regularized_at(model, policy, &mf, alpha)?,
    })
}

/// Distribution one stage after the start of `member`'s window.
pub(crate) fn next_start_mf<S: Scalar>(
    model: &MfgModel<S>,
    t_start: usize,
    start_mf: &[S],
    member: &Policy<S>,
) -> Vec<S> {
    let mut out = vec![S::zero(); model.num_states()];
    forward_step(model, t_start, start_mf, |x| member.row(0, x), &mut out);
    out
}

/// Checks that every ensemble member starts from the distribution its
/// predecessor induces one stage later (and the first from `mu0`).
pub fn check_chaining<S: Scalar>(model: &MfgModel<S>, ensemble: &PolicyEnsemble<S>) -> Result<()> {
    let tol = S::tol(CHAINING_TOL);
    let mut expected = model.initial_mf().to_vec();
    let mut prev_time = None;
    for (i, (&t, start)) in ensemble
        .start_times()
        .iter()
        .zip(ensemble.start_mfs())
        .enumerate()
    {
        if let Some(prev) = prev_time {
            if t != prev + 1 {
                return Err(MfgError::InconsistentEnsemble {
                    t_start: t,
                    deviation: f64::INFINITY,
                });
            }
            expected = next_start_mf(
                model,
                prev,
                &ensemble.start_mfs()[i - 1],
                &ensemble.members()[i - 1],
            );
        } else if t != 0 {
            return Err(MfgError::InconsistentEnsemble {
                t_start: t,
                deviation: f64::INFINITY,
            });
        }
        let deviation = expected
            .iter()
            .zip(start)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max);
        if !(deviation <= tol) {
            return Err(MfgError::InconsistentEnsemble {
                t_start: t,
                deviation: deviation.to_f64_lossy(),
            });
        }
        prev_time = Some(t);
    }
    Ok(())
}

/// Sum over ensemble members of their windowed exploitabilities.
///
/// `alpha = 0` uses the unregularized objective, `alpha > 0` the
/// entropy-regularized one.
pub fn rh_exploitability<S: Scalar>(
    model: &MfgModel<S>,
    ensemble: &PolicyEnsemble<S>,
    alpha: S,
) -> Result<S> {
    if alpha < S::zero() || !alpha.is_finite() {
        return Err(MfgError::NonPositiveTemperature(alpha.to_f64_lossy()));
    }
    if ensemble.total_horizon() != model.horizon() {
        return Err(MfgError::DimensionMismatch {
            what: "ensemble horizon",
            expected: model.horizon(),
            actual: ensemble.total_horizon(),
        });
    }
    check_chaining(model, ensemble)?;
    let mut total = S::zero();
    for ((&t, start), member) in ensemble
        .start_times()
        .iter()
        .zip(ensemble.start_mfs())
        .zip(ensemble.members())
    {
        let window = model.window(t, ensemble.lookahead(), start)?;
        total = total
            + if alpha > S::zero() {
                exploitability_regularized(&window, member, alpha)?
            } else {
                exploitability(&window, member)?
            };
    }
    Ok(total)
}
