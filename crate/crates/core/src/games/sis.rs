use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::{Dynamics, MfgModel};
use crate::scalar::Scalar;

pub const SUSCEPTIBLE: usize = 0;
pub const INFECTED: usize = 1;
pub const NO_QUARANTINE: usize = 0;
pub const QUARANTINE: usize = 1;

/// Susceptible-infected-susceptible epidemic with optional quarantine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SisParams {
    /// Healing probability per stage.
    pub gamma: f64,
    /// Infection rate; a susceptible agent not in quarantine is infected
    /// with probability `kappa * mu(I)`.
    pub kappa: f64,
    pub c_i: f64,
    pub c_q: f64,
    pub mu0_infected: f64,
    /// Not fixed by the benchmark description; 50 stages by default.
    pub horizon: usize,
}

impl Default for SisParams {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            kappa: 0.81,
            c_i: 1.0,
            c_q: 0.5,
            mu0_infected: 0.1,
            horizon: 50,
        }
    }
}

impl SisParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |field: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(MfgError::InvalidConfig {
                    field,
                    reason: format!("must lie in [0, 1], got {v}"),
                })
            }
        };
        unit("gamma", self.gamma)?;
        unit("kappa", self.kappa)?;
        unit("mu0_infected", self.mu0_infected)?;
        for (field, v) in [("c_i", self.c_i), ("c_q", self.c_q)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MfgError::InvalidConfig {
                    field,
                    reason: format!("must be a nonnegative cost, got {v}"),
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
pub struct SisGame<S> {
    gamma: S,
    kappa: S,
    c_i: S,
    c_q: S,
}

impl<S: Scalar> Dynamics<S> for SisGame<S> {
    fn transition(&self, _t: usize, x: usize, u: usize, mf: &[S], next: &mut [S]) {
        let to_infected = match (x, u) {
            (INFECTED, _) => S::one() - self.gamma,
            (_, NO_QUARANTINE) => self.kappa * mf[INFECTED],
            _ => S::zero(),
        };
        next[SUSCEPTIBLE] = S::one() - to_infected;
        next[INFECTED] = to_infected;
    }

    fn reward(&self, _t: usize, x: usize, u: usize, _mf: &[S]) -> S {
        // (S, Q) carries the infection cost as well, as in the benchmark table.
        match (x, u) {
            (SUSCEPTIBLE, NO_QUARANTINE) => S::zero(),
            (INFECTED, NO_QUARANTINE) => -self.c_i,
            _ => -self.c_i - self.c_q,
        }
    }
}

pub fn make_sis<S: Scalar>(params: &SisParams) -> Result<MfgModel<S>> {
    params.validate()?;
    let game = SisGame {
        gamma: S::lit(params.gamma),
        kappa: S::lit(params.kappa),
        c_i: S::lit(params.c_i),
        c_q: S::lit(params.c_q),
    };
    let infected = S::lit(params.mu0_infected);
    MfgModel::new(
        "sis",
        2,
        2,
        params.horizon,
        vec![S::one() - infected, infected],
        Arc::new(game),
    )
}
