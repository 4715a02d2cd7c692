use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{Dynamics, MfgModel};
use crate::scalar::Scalar;

pub const START: usize = 0;
pub const ROCK: usize = 1;
pub const PAPER: usize = 2;
pub const SCISSOR: usize = 3;

/// Rock-paper-scissors with congestion: the jump to the chosen state fails
/// with probability equal to that state's current mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpsParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub horizon: usize,
}

impl Default for RpsParams {
    fn default() -> Self {
        Self {
            a: 10.0,
            b: 1.0,
            c: 10.0,
            horizon: 10,
        }
    }
}

impl RpsParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !v.is_finite() {
                return Err(MfgError::InvalidConfig {
                    field,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.horizon == 0 {
            return Err(MfgError::InvalidConfig {
                field: "horizon",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RpsGame<S> {
    a: S,
    b: S,
    c: S,
}

impl<S: Scalar> Dynamics<S> for RpsGame<S> {
    fn transition(&self, _t: usize, x: usize, u: usize, mf: &[S], next: &mut [S]) {
        next.iter_mut().for_each(|p| *p = S::zero());
        let target = u + 1;
        if target == x {
            next[x] = S::one();
        } else {
            next[target] = S::one() - mf[target];
            next[x] = mf[target];
        }
    }

    fn reward(&self, _t: usize, x: usize, _u: usize, mf: &[S]) -> S {
        match x {
            ROCK => -self.a * mf[PAPER] + self.b * mf[SCISSOR],
            PAPER => -self.c * mf[SCISSOR] + self.a * mf[ROCK],
            SCISSOR => -self.b * mf[ROCK] + self.c * mf[PAPER],
            _ => S::zero(),
        }
    }
}

pub fn make_rps<S: Scalar>(params: &RpsParams) -> Result<MfgModel<S>> {
    params.validate()?;
    let game = RpsGame {
        a: S::lit(params.a),
        b: S::lit(params.b),
        c: S::lit(params.c),
    };
    let mut mu0 = vec![S::zero(); 4];
    mu0[START] = S::one();
    MfgModel::new("rps", 4, 3, params.horizon, mu0, Arc::new(game))
}
