use std::sync::Arc;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{Dynamics, MfgModel};
use crate::scalar::Scalar;

/// Generator used for random games, recorded in experiment metadata.
pub const PRNG_ID: &str = "chacha20 (rand_chacha 0.3, seed_from_u64, Open01 f64 draws)";

/// Random tabular game with a crowd-aversion reward `-eta * log mu(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomMfgParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub eta: f64,
    pub seed: u64,
    /// Lower bound applied to `mu(x)` inside the logarithm.
    pub mf_floor: f64,
}

impl Default for RandomMfgParams {
    fn default() -> Self {
        Self {
            num_states: 100,
            num_actions: 10,
            horizon: 10,
            eta: 1.0,
            seed: 0,
            mf_floor: 1e-10,
        }
    }
}

impl RandomMfgParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("num_states", self.num_states),
            ("num_actions", self.num_actions),
            ("horizon", self.horizon),
        ] {
            if v == 0 {
                return Err(MfgError::InvalidConfig {
                    field,
                    reason: "must be positive".into(),
                });
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(MfgError::InvalidConfig {
                field: "eta",
                reason: format!("must be nonnegative, got {}", self.eta),
            });
        }
        if !(self.mf_floor > 0.0 && self.mf_floor.is_finite()) {
            return Err(MfgError::InvalidConfig {
                field: "mf_floor",
                reason: format!("must be positive, got {}", self.mf_floor),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RandomGame<S> {
    nx: usize,
    nu: usize,
    /// `p[t][x][u][x']`, flattened.
    transitions: Vec<S>,
    /// `r[t][x][u]`, flattened.
    rewards: Vec<S>,
    eta: S,
    floor: S,
}

impl<S: Scalar> RandomGame<S> {
    pub fn reward_table(&self) -> &[S] {
        &self.rewards
    }

    pub fn transition_table(&self) -> &[S] {
        &self.transitions
    }
}

impl<S: Scalar> Dynamics<S> for RandomGame<S> {
    fn transition(&self, t: usize, x: usize, u: usize, _mf: &[S], next: &mut [S]) {
        let at = ((t * self.nx + x) * self.nu + u) * self.nx;
        next.copy_from_slice(&self.transitions[at..at + self.nx]);
    }

    fn reward(&self, t: usize, x: usize, u: usize, mf: &[S]) -> S {
        let base = self.rewards[(t * self.nx + x) * self.nu + u];
        if self.eta == S::zero() {
            base
        } else {
            base - self.eta * mf[x].max(self.floor).ln()
        }
    }
}

/// Draws the game tables; the same params always yield bitwise-identical tables.
///
/// Draw order: all transition weights indexed `[t][x][x'][u]`, then all
/// rewards indexed `[t][x][u]`, each uniform on the open unit interval.
pub fn random_game<S: Scalar>(params: &RandomMfgParams) -> Result<RandomGame<S>> {
    params.validate()?;
    let (nt, nx, nu) = (params.horizon, params.num_states, params.num_actions);
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let mut transitions = vec![S::zero(); nt * nx * nu * nx];
    for t in 0..nt {
        for x in 0..nx {
            for y in 0..nx {
                for u in 0..nu {
                    let w: f64 = rng.sample(Open01);
                    transitions[((t * nx + x) * nu + u) * nx + y] = S::lit(w);
                }
            }
        }
    }
    for row in transitions.chunks_mut(nx) {
        let total: S = row.iter().copied().sum();
        row.iter_mut().for_each(|p| *p = *p / total);
    }
    let rewards = (0..nt * nx * nu)
        .map(|_| S::lit(rng.sample::<f64, _>(Open01)))
        .collect();
    Ok(RandomGame {
        nx,
        nu,
        transitions,
        rewards,
        eta: S::lit(params.eta),
        floor: S::lit(params.mf_floor),
    })
}

pub fn make_random<S: Scalar>(params: &RandomMfgParams) -> Result<MfgModel<S>> {
    let game = random_game(params)?;
    let n = params.num_states;
    MfgModel::new(
        format!("random-{}", params.seed),
        n,
        params.num_actions,
        params.horizon,
        vec![S::one() / S::from_usize(n).unwrap(); n],
        Arc::new(game),
    )
}
