//! Benchmark games and the tabular game file loader.

mod file;
mod random;
pub mod rps;
pub mod sis;

pub use file::{
    load_game, parse_game, Coupling, GameFile, LinearCoupling, LogBarrier, RewardSpec, TabularGame,
    TransitionSpec,
};
pub use random::{make_random, random_game, RandomGame, RandomMfgParams, PRNG_ID};
pub use rps::{make_rps, RpsGame, RpsParams};
pub use sis::{make_sis, SisGame, SisParams};

use crate::scalar::Scalar;

/// Probe mean fields used to sanity-check a game: uniform plus every vertex.
pub fn default_probes<S: Scalar>(num_states: usize) -> Vec<Vec<S>> {
    let uniform = S::one() / S::from_usize(num_states).unwrap();
    let mut probes = vec![vec![uniform; num_states]];
    for x in 0..num_states {
        let mut vertex = vec![S::zero(); num_states];
        vertex[x] = S::one();
        probes.push(vertex);
    }
    probes
}
