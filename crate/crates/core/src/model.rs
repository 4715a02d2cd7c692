//! Finite mean field game data model and the tensors the solvers exchange.
//!
//! All tensors are dense and row-major in `(t, x, u)` order. Every
//! container is immutable once handed out; solvers build new values rather
//! than mutating shared ones.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::scalar::Scalar;

/// Tolerance on simplex rows at construction time.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance on simplex rows after forward propagation.
pub const PROPAGATED_SIMPLEX_TOL: f64 = 1e-10;

/// Mean-field dependent transition kernel and reward of a finite game.
///
/// Implementations must be pure: the same arguments always produce the
/// same output, and calls may happen concurrently.
pub trait Dynamics<S: Scalar>: Send + Sync {
    /// Writes `p_t(. | x, u, mf)` into `next`, which has one slot per state.
    fn transition(&self, t: usize, x: usize, u: usize, mf: &[S], next: &mut [S]);

    /// `r_t(x, u, mf)`.
    fn reward(&self, t: usize, x: usize, u: usize, mf: &[S]) -> S;
}

/// Adapter turning a pair of closures into [`Dynamics`].
pub struct FnDynamics<P, R> {
    transition: P,
    reward: R,
}

impl<P, R> FnDynamics<P, R> {
    pub fn new(transition: P, reward: R) -> Self {
        Self { transition, reward }
    }
}

impl<S, P, R> Dynamics<S> for FnDynamics<P, R>
where
    S: Scalar,
    P: Fn(usize, usize, usize, &[S], &mut [S]) + Send + Sync,
    R: Fn(usize, usize, usize, &[S]) -> S + Send + Sync,
{
    fn transition(&self, t: usize, x: usize, u: usize, mf: &[S], next: &mut [S]) {
        (self.transition)(t, x, u, mf, next)
    }

    fn reward(&self, t: usize, x: usize, u: usize, mf: &[S]) -> S {
        (self.reward)(t, x, u, mf)
    }
}

/// A finite, discrete-time mean field game.
///
/// A model may be a time window of a larger game (see [`MfgModel::window`]),
/// in which case local time `0` maps to `time_offset` of the underlying
/// dynamics and `initial_mf` is the window's starting distribution.
#[derive(Clone)]
pub struct MfgModel<S: Scalar> {
    name: String,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_mf: Vec<S>,
    dynamics: Arc<dyn Dynamics<S>>,
    time_offset: usize,
}

impl<S: Scalar> fmt::Debug for MfgModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MfgModel")
            .field("name", &self.name)
            .field("num_states", &self.num_states)
            .field("num_actions", &self.num_actions)
            .field("horizon", &self.horizon)
            .field("time_offset", &self.time_offset)
            .finish()
    }
}

impl<S: Scalar> MfgModel<S> {
    pub fn new(
        name: impl Into<String>,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_mf: Vec<S>,
        dynamics: Arc<dyn Dynamics<S>>,
    ) -> Result<Self> {
        for (field, value) in [
            ("num_states", num_states),
            ("num_actions", num_actions),
            ("horizon", horizon),
        ] {
            if value == 0 {
                return Err(MfgError::InvalidConfig {
                    field,
                    reason: "must be positive".into(),
                });
            }
        }
        if initial_mf.len() != num_states {
            return Err(MfgError::DimensionMismatch {
                what: "initial mean field",
                expected: num_states,
                actual: initial_mf.len(),
            });
        }
        check_distribution("initial mean field", &initial_mf, S::tol(SIMPLEX_TOL))?;
        Ok(Self {
            name: name.into(),
            num_states,
            num_actions,
            horizon,
            initial_mf,
            dynamics,
            time_offset: 0,
        })
    }

    /// Builds a model from two closures; convenient for small hand-written games.
    pub fn from_fns<P, R>(
        name: impl Into<String>,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_mf: Vec<S>,
        transition: P,
        reward: R,
    ) -> Result<Self>
    where
        P: Fn(usize, usize, usize, &[S], &mut [S]) + Send + Sync + 'static,
        R: Fn(usize, usize, usize, &[S]) -> S + Send + Sync + 'static,
    {
        Self::new(
            name,
            num_states,
            num_actions,
            horizon,
            initial_mf,
            Arc::new(FnDynamics::new(transition, reward)),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_mf(&self) -> &[S] {
        &self.initial_mf
    }

    /// Absolute time of local stage `0` in the underlying dynamics.
    pub fn time_offset(&self) -> usize {
        self.time_offset
    }

    /// Transition row at local time `t`.
    pub fn transition(&self, t: usize, x: usize, u: usize, mf: &[S], next: &mut [S]) {
        self.dynamics
            .transition(t + self.time_offset, x, u, mf, next)
    }

    /// Reward at local time `t`.
    pub fn reward(&self, t: usize, x: usize, u: usize, mf: &[S]) -> S {
        self.dynamics.reward(t + self.time_offset, x, u, mf)
    }

    /// Last local stage covered by a window of lookahead `lookahead` starting at `t_start`.
    pub fn window_end(&self, t_start: usize, lookahead: usize) -> usize {
        (self.horizon - 1).min(t_start.saturating_add(lookahead))
    }

    /// Sub-game over stages `{t_start, ..., min(T-1, t_start + lookahead)}`
    /// started from `mu_start`.
    pub fn window(&self, t_start: usize, lookahead: usize, mu_start: &[S]) -> Result<Self> {
        if t_start >= self.horizon {
            return Err(MfgError::WindowOutOfRange {
                t_start,
                horizon: self.horizon,
            });
        }
        if mu_start.len() != self.num_states {
            return Err(MfgError::DimensionMismatch {
                what: "window start mean field",
                expected: self.num_states,
                actual: mu_start.len(),
            });
        }
        check_distribution(
            "window start mean field",
            mu_start,
            S::tol(PROPAGATED_SIMPLEX_TOL),
        )?;
        let end = self.window_end(t_start, lookahead);
        Ok(Self {
            name: format!("{}[{}..={}]", self.name, t_start, end),
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: end - t_start + 1,
            initial_mf: mu_start.to_vec(),
            dynamics: Arc::clone(&self.dynamics),
            time_offset: self.time_offset + t_start,
        })
    }

    /// Same dynamics with a different starting distribution.
    pub fn with_initial_mf(&self, initial_mf: &[S]) -> Result<Self> {
        let mut model = self.window(0, self.horizon, initial_mf)?;
        model.name = self.name.clone();
        Ok(model)
    }
}

/// Checks nonnegativity and unit mass within `tol`.
pub fn check_distribution<S: Scalar>(what: &str, row: &[S], tol: S) -> Result<()> {
    let sum: S = row.iter().copied().sum();
    let min = row.iter().copied().fold(S::infinity(), S::min);
    let finite = row.iter().all(|v| v.is_finite());
    if !finite || min < -tol || (sum - S::one()).abs() > tol {
        return Err(MfgError::NotADistribution {
            what: what.to_string(),
            sum: sum.to_f64_lossy(),
            min: min.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Rescales a nonnegative row to unit mass. Returns `false` (leaving the row
/// untouched) when the row has no positive mass.
pub fn normalize_in_place<S: Scalar>(row: &mut [S]) -> bool {
    let sum: S = row.iter().copied().sum();
    if !(sum > S::zero()) || !sum.is_finite() {
        return false;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
    true
}

/// One problem found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Transition row that is not a probability vector.
    TransitionRow {
        t: usize,
        x: usize,
        u: usize,
        probe: usize,
        sum: f64,
        min: f64,
    },
    NonFiniteReward {
        t: usize,
        x: usize,
        u: usize,
        probe: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates every `(t, x, u)` of the model at each probe mean field and
/// lists transition rows off the simplex (tolerance `1e-12`) and non-finite
/// rewards. Violations are reported, never raised.
pub fn validate_model<S: Scalar>(model: &MfgModel<S>, probe_mfs: &[Vec<S>]) -> ValidationReport {
    let tol = S::tol(SIMPLEX_TOL);
    let mut report = ValidationReport::default();
    let mut next = vec![S::zero(); model.num_states()];
    for (probe, mf) in probe_mfs.iter().enumerate() {
        for t in 0..model.horizon() {
            for x in 0..model.num_states() {
                for u in 0..model.num_actions() {
                    next.iter_mut().for_each(|v| *v = S::zero());
                    model.transition(t, x, u, mf, &mut next);
                    if let Err(MfgError::NotADistribution { sum, min, .. }) =
                        check_distribution("transition", &next, tol)
                    {
                        report.violations.push(Violation::TransitionRow {
                            t,
                            x,
                            u,
                            probe,
                            sum,
                            min,
                        });
                    }
                    let r = model.reward(t, x, u, mf);
                    if !r.is_finite() {
                        report.violations.push(Violation::NonFiniteReward {
                            t,
                            x,
                            u,
                            probe,
                            value: r.to_f64_lossy(),
                        });
                    }
                }
            }
        }
    }
    report
}

/// Time-indexed Markov policy `pi_t(u | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<S>,
}

impl<S: Scalar> Policy<S> {
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = S::one() / S::from_usize(num_actions).unwrap();
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![p; horizon * num_states * num_actions],
        }
    }

    pub fn uniform_for(model: &MfgModel<S>) -> Self {
        Self::uniform(model.horizon(), model.num_states(), model.num_actions())
    }

    /// Builds a policy from a flat `(t, x, u)` buffer, checking every row.
    pub fn from_flat(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<S>,
    ) -> Result<Self> {
        let expected = horizon * num_states * num_actions;
        if probs.len() != expected || expected == 0 {
            return Err(MfgError::DimensionMismatch {
                what: "policy tensor",
                expected,
                actual: probs.len(),
            });
        }
        let policy = Self {
            horizon,
            num_states,
            num_actions,
            probs,
        };
        for t in 0..horizon {
            for x in 0..num_states {
                check_distribution(
                    &format!("policy row (t={t}, x={x})"),
                    policy.row(t, x),
                    S::tol(SIMPLEX_TOL),
                )?;
            }
        }
        Ok(policy)
    }

    /// Builds a policy from nested `[t][x][u]` rows.
    pub fn from_nested(rows: &[Vec<Vec<S>>]) -> Result<Self> {
        let horizon = rows.len();
        let num_states = rows.first().map_or(0, Vec::len);
        let num_actions = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
        for stage in rows {
            if stage.len() != num_states {
                return Err(MfgError::DimensionMismatch {
                    what: "policy states",
                    expected: num_states,
                    actual: stage.len(),
                });
            }
            for row in stage {
                if row.len() != num_actions {
                    return Err(MfgError::DimensionMismatch {
                        what: "policy actions",
                        expected: num_actions,
                        actual: row.len(),
                    });
                }
                probs.extend_from_slice(row);
            }
        }
        Self::from_flat(horizon, num_states, num_actions, probs)
    }

    /// Builds a policy by evaluating `f(t, x, u)`; rows are normalized.
    pub fn from_fn(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> S,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
        for t in 0..horizon {
            for x in 0..num_states {
                let start = probs.len();
                probs.extend((0..num_actions).map(|u| f(t, x, u)));
                if !normalize_in_place(&mut probs[start..]) {
                    return Err(MfgError::NotADistribution {
                        what: format!("policy row (t={t}, x={x})"),
                        sum: 0.0,
                        min: 0.0,
                    });
                }
            }
        }
        Self::from_flat(horizon, num_states, num_actions, probs)
    }

    /// Unchecked constructor for solver internals that guarantee the invariant.
    pub(crate) fn from_raw(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<S>,
    ) -> Self {
        debug_assert_eq!(probs.len(), horizon * num_states * num_actions);
        Self {
            horizon,
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, t: usize, x: usize) -> &[S] {
        let start = (t * self.num_states + x) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn prob(&self, t: usize, x: usize, u: usize) -> S {
        self.probs[(t * self.num_states + x) * self.num_actions + u]
    }

    pub fn as_flat(&self) -> &[S] {
        &self.probs
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<S>>> {
        (0..self.horizon)
            .map(|t| {
                (0..self.num_states)
                    .map(|x| self.row(t, x).to_vec())
                    .collect()
            })
            .collect()
    }

    /// Stages `start..start + len` as a standalone policy.
    pub fn slice_times(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.horizon || len == 0 {
            return Err(MfgError::WindowOutOfRange {
                t_start: start,
                horizon: self.horizon,
            });
        }
        let stride = self.num_states * self.num_actions;
        Ok(Self {
            horizon: len,
            num_states: self.num_states,
            num_actions: self.num_actions,
            probs: self.probs[start * stride..(start + len) * stride].to_vec(),
        })
    }

    /// Checks that the policy shape matches `model`.
    pub fn check_shape(&self, model: &MfgModel<S>) -> Result<()> {
        let pairs = [
            ("policy horizon", model.horizon(), self.horizon),
            ("policy states", model.num_states(), self.num_states),
            ("policy actions", model.num_actions(), self.num_actions),
        ];
        for (what, expected, actual) in pairs {
            if expected != actual {
                return Err(MfgError::DimensionMismatch {
                    what,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Time-indexed state distributions `mu_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldFlow<S> {
    horizon: usize,
    num_states: usize,
    mass: Vec<S>,
}

impl<S: Scalar> MeanFieldFlow<S> {
    pub fn from_flat(horizon: usize, num_states: usize, mass: Vec<S>) -> Result<Self> {
        if mass.len() != horizon * num_states || mass.is_empty() {
            return Err(MfgError::DimensionMismatch {
                what: "mean field tensor",
                expected: horizon * num_states,
                actual: mass.len(),
            });
        }
        let flow = Self {
            horizon,
            num_states,
            mass,
        };
        for t in 0..horizon {
            check_distribution(
                &format!("mean field row t={t}"),
                flow.at(t),
                S::tol(PROPAGATED_SIMPLEX_TOL),
            )?;
        }
        Ok(flow)
    }

    pub(crate) fn from_raw(horizon: usize, num_states: usize, mass: Vec<S>) -> Self {
        debug_assert_eq!(mass.len(), horizon * num_states);
        Self {
            horizon,
            num_states,
            mass,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn at(&self, t: usize) -> &[S] {
        &self.mass[t * self.num_states..(t + 1) * self.num_states]
    }

    pub(crate) fn at_mut(&mut self, t: usize) -> &mut [S] {
        &mut self.mass[t * self.num_states..(t + 1) * self.num_states]
    }

    pub fn as_flat(&self) -> &[S] {
        &self.mass
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [S] {
        &mut self.mass
    }

    pub fn check_shape(&self, model: &MfgModel<S>) -> Result<()> {
        if self.horizon != model.horizon() {
            return Err(MfgError::DimensionMismatch {
                what: "mean field horizon",
                expected: model.horizon(),
                actual: self.horizon,
            });
        }
        if self.num_states != model.num_states() {
            return Err(MfgError::DimensionMismatch {
                what: "mean field states",
                expected: model.num_states(),
                actual: self.num_states,
            });
        }
        Ok(())
    }
}

/// State-action value table `Q_t(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction<S> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<S>,
}

impl<S: Scalar> QFunction<S> {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![S::zero(); horizon * num_states * num_actions],
        }
    }

    pub fn from_flat(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        values: Vec<S>,
    ) -> Result<Self> {
        if values.len() != horizon * num_states * num_actions || values.is_empty() {
            return Err(MfgError::DimensionMismatch {
                what: "Q tensor",
                expected: horizon * num_states * num_actions,
                actual: values.len(),
            });
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            values,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, t: usize, x: usize) -> &[S] {
        let start = (t * self.num_states + x) * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    pub(crate) fn row_mut(&mut self, t: usize, x: usize) -> &mut [S] {
        let start = (t * self.num_states + x) * self.num_actions;
        &mut self.values[start..start + self.num_actions]
    }

    pub fn get(&self, t: usize, x: usize, u: usize) -> S {
        self.row(t, x)[u]
    }

    pub fn as_flat(&self) -> &[S] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Receding-horizon policy ensemble: one windowed policy per start time.
///
/// Member `i` starts at `start_times[i]` from distribution `start_mfs[i]` and
/// covers stages `start..=min(T-1, start + lookahead)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEnsemble<S> {
    total_horizon: usize,
    lookahead: usize,
    start_times: Vec<usize>,
    members: Vec<Policy<S>>,
    start_mfs: Vec<Vec<S>>,
}

impl<S: Scalar> PolicyEnsemble<S> {
    pub fn new(
        total_horizon: usize,
        lookahead: usize,
        start_times: Vec<usize>,
        members: Vec<Policy<S>>,
        start_mfs: Vec<Vec<S>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(MfgError::Empty("policy ensemble"));
        }
        if start_times.len() != members.len() || start_mfs.len() != members.len() {
            return Err(MfgError::DimensionMismatch {
                what: "ensemble members",
                expected: members.len(),
                actual: start_times.len().min(start_mfs.len()),
            });
        }
        for (&t, member) in start_times.iter().zip(&members) {
            if t >= total_horizon {
                return Err(MfgError::WindowOutOfRange {
                    t_start: t,
                    horizon: total_horizon,
                });
            }
            let expected = (total_horizon - 1).min(t + lookahead) - t + 1;
            if member.horizon() != expected {
                return Err(MfgError::DimensionMismatch {
                    what: "ensemble member horizon",
                    expected,
                    actual: member.horizon(),
                });
            }
        }
        Ok(Self {
            total_horizon,
            lookahead,
            start_times,
            members,
            start_mfs,
        })
    }

    pub fn total_horizon(&self) -> usize {
        self.total_horizon
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn start_times(&self) -> &[usize] {
        &self.start_times
    }

    pub fn members(&self) -> &[Policy<S>] {
        &self.members
    }

    pub fn start_mfs(&self) -> &[Vec<S>] {
        &self.start_mfs
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// One row of a [`ConvergenceTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub delta_qpire: f64,
    pub delta_qstarre: f64,
    pub delta_re: f64,
    pub exploitability: f64,
    pub reg_exploitability: f64,
    pub wall_time_seconds: f64,
}

/// Per-iteration metric records emitted by the solvers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `row`; iteration numbers must strictly increase.
    pub fn push(&mut self, row: TraceRow) {
        if let Some(last) = self.rows.last() {
            assert!(
                row.iteration > last.iteration,
                "trace iterations must strictly increase ({} after {})",
                row.iteration,
                last.iteration
            );
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
