use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::MfgModel;
use crate::scalar::Scalar;

/// Row-sum tolerance above which a loaded transition row is logged.
const LOAD_TOL: f64 = 1e-9;

/// Transition table of a game file: one table per stage, or one shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransitionSpec {
    PerStage(Vec<Vec<Vec<Vec<f64>>>>),
    TimeInvariant(Vec<Vec<Vec<f64>>>),
    Tagged {
        #[serde(rename = "time-invariant")]
        table: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardSpec {
    PerStage(Vec<Vec<Vec<f64>>>),
    TimeInvariant(Vec<Vec<f64>>),
    Tagged {
        #[serde(rename = "time-invariant")]
        table: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogBarrier {
    pub eta: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCoupling {
    /// `C[x][x']`; adds `sum_x' C[x][x'] mu(x')` to the reward at `x`.
    pub matrix: Vec<Vec<f64>>,
}

/// Mean-field-dependent reward terms added to the table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_barrier: Option<LogBarrier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearCoupling>,
}

/// On-disk form of a tabular game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub name: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_mf: Vec<f64>,
    pub transitions: TransitionSpec,
    pub rewards: RewardSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
}

/// Game with mean-field-independent tables and optional reward coupling.
#[derive(Debug, Clone)]
pub struct TabularGame<S> {
    nx: usize,
    nu: usize,
    /// `p[t][x][u][x']`; a single stage when time-invariant.
    transitions: Vec<S>,
    transition_stages: usize,
    rewards: Vec<S>,
    reward_stages: usize,
    log_barrier: Option<(S, S)>,
    linear: Option<Vec<S>>,
}

impl<S: Scalar> crate::model::Dynamics<S> for TabularGame<S> {
    fn transition(&self, t: usize, x: usize, u: usize, _mf: &[S], next: &mut [S]) {
        let t = t.min(self.transition_stages - 1);
        let at = ((t * self.nx + x) * self.nu + u) * self.nx;
        next.copy_from_slice(&self.transitions[at..at + self.nx]);
    }

    fn reward(&self, t: usize, x: usize, u: usize, mf: &[S]) -> S {
        let t = t.min(self.reward_stages - 1);
        let mut r = self.rewards[(t * self.nx + x) * self.nu + u];
        if let Some(matrix) = &self.linear {
            let row = &matrix[x * self.nx..(x + 1) * self.nx];
            r = r + row.iter().zip(mf).map(|(&c, &m)| c * m).sum::<S>();
        }
        if let Some((eta, floor)) = self.log_barrier {
            r = r - eta * mf[x].max(floor).ln();
        }
        r
    }
}

fn shape_error(field: String, message: String) -> MfgError {
    MfgError::Parse {
        line: 0,
        field,
        message,
    }
}

fn check_len<T>(field: impl FnOnce() -> String, v: &[T], expected: usize) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(shape_error(
            field(),
            format!("expected {expected} entries, found {}", v.len()),
        ))
    }
}

fn flatten_stage<S: Scalar>(
    prefix: &str,
    table: &[Vec<Vec<f64>>],
    nx: usize,
    nu: usize,
    out: &mut Vec<S>,
) -> Result<()> {
    check_len(|| prefix.to_string(), table, nx)?;
    for (x, by_action) in table.iter().enumerate() {
        check_len(|| format!("{prefix}[{x}]"), by_action, nu)?;
        for (u, row) in by_action.iter().enumerate() {
            let field = || format!("{prefix}[{x}][{u}]");
            check_len(field, row, nx)?;
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(shape_error(
                    field(),
                    "probabilities must be finite and nonnegative".into(),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > LOAD_TOL {
                log::warn!("{}: transition row sums to {sum}", field());
            }
            out.extend(row.iter().map(|&p| S::lit(p)));
        }
    }
    Ok(())
}

fn flatten_rewards<S: Scalar>(
    prefix: &str,
    table: &[Vec<f64>],
    nx: usize,
    nu: usize,
    out: &mut Vec<S>,
) -> Result<()> {
    check_len(|| prefix.to_string(), table, nx)?;
    for (x, row) in table.iter().enumerate() {
        check_len(|| format!("{prefix}[{x}]"), row, nu)?;
        out.extend(row.iter().map(|&r| S::lit(r)));
    }
    Ok(())
}

impl GameFile {
    /// Builds the model. Transition rows off the simplex are accepted (and
    /// logged); [`crate::model::validate_model`] lists them.
    pub fn into_model<S: Scalar>(self) -> Result<MfgModel<S>> {
        let (nx, nu, nt) = (self.num_states, self.num_actions, self.horizon);
        if nx == 0 || nu == 0 || nt == 0 {
            return Err(shape_error(
                "num_states/num_actions/horizon".into(),
                "dimensions must be positive".into(),
            ));
        }
        check_len(|| "initial_mf".into(), &self.initial_mf, nx)?;

        let mut transitions = Vec::new();
        let transition_stages = match &self.transitions {
            TransitionSpec::PerStage(stages) => {
                check_len(|| "transitions".into(), stages, nt)?;
                for (t, stage) in stages.iter().enumerate() {
                    flatten_stage(
                        &format!("transitions[{t}]"),
                        stage,
                        nx,
                        nu,
                        &mut transitions,
                    )?;
                }
                nt
            }
            TransitionSpec::TimeInvariant(table) | TransitionSpec::Tagged { table } => {
                flatten_stage("transitions", table, nx, nu, &mut transitions)?;
                1
            }
        };

        let mut rewards = Vec::new();
        let reward_stages = match &self.rewards {
            RewardSpec::PerStage(stages) => {
                check_len(|| "rewards".into(), stages, nt)?;
                for (t, stage) in stages.iter().enumerate() {
                    flatten_rewards(&format!("rewards[{t}]"), stage, nx, nu, &mut rewards)?;
                }
                nt
            }
            RewardSpec::TimeInvariant(table) | RewardSpec::Tagged { table } => {
                flatten_rewards("rewards", table, nx, nu, &mut rewards)?;
                1
            }
        };

        let coupling = self.coupling.unwrap_or_default();
        let log_barrier = match coupling.log_barrier {
            Some(LogBarrier { eta, floor }) => {
                if !(floor > 0.0 && eta.is_finite()) {
                    return Err(shape_error(
                        "coupling.log_barrier".into(),
                        "eta must be finite and floor positive".into(),
                    ));
                }
                Some((S::lit(eta), S::lit(floor)))
            }
            None => None,
        };
        let linear = match coupling.linear {
            Some(LinearCoupling { matrix }) => {
                check_len(|| "coupling.linear.matrix".into(), &matrix, nx)?;
                let mut flat = Vec::with_capacity(nx * nx);
                for (x, row) in matrix.iter().enumerate() {
                    check_len(|| format!("coupling.linear.matrix[{x}]"), row, nx)?;
                    flat.extend(row.iter().map(|&c| S::lit(c)));
                }
                Some(flat)
            }
            None => None,
        };

        let game = TabularGame {
            nx,
            nu,
            transitions,
            transition_stages,
            rewards,
            reward_stages,
            log_barrier,
            linear,
        };
        let mu0 = self.initial_mf.iter().map(|&m| S::lit(m)).collect();
        MfgModel::new(self.name, nx, nu, nt, mu0, Arc::new(game))
    }
}

/// Parses a game document; errors carry the line and the offending field path.
pub fn parse_game(text: &str) -> Result<GameFile> {
    if text.trim().is_empty() {
        return Err(MfgError::Parse {
            line: 1,
            field: "<document>".into(),
            message: "empty game file".into(),
        });
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let field = match err.path().to_string() {
            p if p == "." => "<document>".to_string(),
            p => p,
        };
        let inner = err.into_inner();
        MfgError::Parse {
            line: inner.line(),
            field,
            message: inner.to_string(),
        }
    })
}

pub fn load_game<S: Scalar>(path: impl AsRef<Path>) -> Result<MfgModel<S>> {
    let text = std::fs::read_to_string(path)?;
    parse_game(&text)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::default_probes;
    use crate::model::{validate_model, Violation};
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    fn two_state() -> serde_json::Value {
        json!({
            "name": "toy",
            "num_states": 2,
            "num_actions": 2,
            "horizon": 3,
            "initial_mf": [0.5, 0.5],
            "transitions": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]],
            "rewards": [[1.0, 0.0], [0.0, 2.0]]
        })
    }

    #[test]
    fn loads_time_invariant_tables() {
        let model: MfgModel<f64> = parse_game(&two_state().to_string())
            .unwrap()
            .into_model()
            .unwrap();
        assert_eq!(model.horizon(), 3);
        let mut next = [0.0; 2];
        model.transition(2, 1, 0, &[0.5, 0.5], &mut next);
        assert_eq!(next, [0.0, 1.0]);
        assert_eq!(model.reward(1, 1, 1, &[0.5, 0.5]), 2.0);
    }

    #[test]
    fn tagged_time_invariant_form() {
        let mut doc = two_state();
        let table = doc["transitions"].take();
        doc["transitions"] = json!({ "time-invariant": table });
        let model: MfgModel<f64> = parse_game(&doc.to_string()).unwrap().into_model().unwrap();
        let mut next = [0.0; 2];
        model.transition(0, 0, 1, &[0.5, 0.5], &mut next);
        assert_eq!(next, [0.0, 1.0]);
    }

    #[test]
    fn coupling_terms() {
        let mut doc = two_state();
        doc["coupling"] = json!({
            "log_barrier": {"eta": 2.0, "floor": 1e-3},
            "linear": {"matrix": [[1.0, -1.0], [0.0, 3.0]]}
        });
        let model: MfgModel<f64> = parse_game(&doc.to_string()).unwrap().into_model().unwrap();
        let r = model.reward(0, 0, 0, &[0.25, 0.75]);
        assert_abs_diff_eq!(r, 1.0 + 0.25 - 0.75 - 2.0 * 0.25f64.ln(), epsilon = 1e-15);
        let r = model.reward(0, 0, 0, &[0.0, 1.0]);
        assert_abs_diff_eq!(r, 1.0 - 1.0 - 2.0 * 1e-3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn defective_row_loads_and_is_reported() {
        let mut doc = two_state();
        doc["transitions"][1][0] = json!([0.5, 0.4]);
        let model: MfgModel<f64> = parse_game(&doc.to_string()).unwrap().into_model().unwrap();
        let report = validate_model(&model, &default_probes(2));
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .all(|v| matches!(v, Violation::TransitionRow { x: 1, u: 0, .. })));
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(parse_game(""), Err(MfgError::Parse { .. })));
        assert!(matches!(parse_game("  \n"), Err(MfgError::Parse { .. })));
    }

    #[test]
    fn errors_name_the_field() {
        let mut doc = two_state();
        doc["horizon"] = json!("three");
        let text = serde_json::to_string_pretty(&doc).unwrap();
        match parse_game(&text) {
            Err(MfgError::Parse { line, field, .. }) => {
                assert_eq!(field, "horizon");
                assert!(line > 1);
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut doc = two_state();
        doc["rewards"][1] = json!([0.0]);
        match parse_game(&doc.to_string()).unwrap().into_model::<f64>() {
            Err(MfgError::Parse { field, .. }) => assert_eq!(field, "rewards[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_probability() {
        let mut doc = two_state();
        doc["transitions"][0][0] = json!([1.5, -0.5]);
        assert!(parse_game(&doc.to_string())
            .unwrap()
            .into_model::<f64>()
            .is_err());
    }

    #[test]
    fn roundtrips_through_serde() {
        let file = parse_game(&two_state().to_string()).unwrap();
        let again = parse_game(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(file, again);
    }
}
