#![allow(dead_code)]

use mfg_core::{MfgModel64, Policy64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-state, two-action, two-stage game whose dynamics and rewards ignore the mean field.
pub const P: [[[f64; 2]; 2]; 2] = [[[0.9, 0.1], [0.2, 0.8]], [[0.6, 0.4], [0.3, 0.7]]];
pub const R: [[[f64; 2]; 2]; 2] = [[[1.0, 0.5], [0.0, 2.0]], [[0.3, 1.2], [1.5, -0.5]]];
pub const MU0: [f64; 2] = [0.7, 0.3];

pub fn oracle_model() -> MfgModel64 {
    MfgModel64::from_fns(
        "oracle",
        2,
        2,
        2,
        MU0.to_vec(),
        |_, x, u, _, next: &mut [f64]| next.copy_from_slice(&P[x][u]),
        |t, x, u, _| R[t][x][u],
    )
    .unwrap()
}

/// Expected total reward of `policy` by summing over all `(x0, u0, x1, u1)` paths.
pub fn enumerate_value(policy: &Policy64) -> f64 {
    let mut total = 0.0;
    for x0 in 0..2 {
        for u0 in 0..2 {
            for x1 in 0..2 {
                for u1 in 0..2 {
                    let prob =
                        MU0[x0] * policy.prob(0, x0, u0) * P[x0][u0][x1] * policy.prob(1, x1, u1);
                    total += prob * (R[0][x0][u0] + R[1][x1][u1]);
                }
            }
        }
    }
    total
}

/// `Q^pi_0(x, u)` as an expectation over the remaining path.
pub fn enumerate_q_policy(policy: &Policy64, x0: usize, u0: usize) -> f64 {
    let mut total = R[0][x0][u0];
    for x1 in 0..2 {
        for u1 in 0..2 {
            total += P[x0][u0][x1] * policy.prob(1, x1, u1) * R[1][x1][u1];
        }
    }
    total
}

/// `Q*_0(x, u)` as the best value over all deterministic continuations.
pub fn enumerate_q_optimal(x0: usize, u0: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for d in 0..4usize {
        let choice = |x: usize| (d >> x) & 1;
        let v = R[0][x0][u0]
            + (0..2)
                .map(|x1| P[x0][u0][x1] * R[1][x1][choice(x1)])
                .sum::<f64>();
        best = best.max(v);
    }
    best
}

/// All sixteen deterministic Markov policies.
pub fn deterministic_policies() -> Vec<Policy64> {
    (0..16usize)
        .map(|bits| {
            Policy64::from_fn(2, 2, 2, |t, x, u| {
                let chosen = (bits >> (2 * t + x)) & 1;
                if u == chosen {
                    1.0
                } else {
                    0.0
                }
            })
            .unwrap()
        })
        .collect()
}

pub fn enumerate_exploitability(policy: &Policy64) -> f64 {
    let best = deterministic_policies()
        .iter()
        .map(enumerate_value)
        .fold(f64::NEG_INFINITY, f64::max);
    best - enumerate_value(policy)
}

fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Best entropy-regularized value, maximizing each row over the grid `{0, step, ..., 1}`
/// stage by stage.
pub fn grid_regularized_best_value(alpha: f64, resolution: usize) -> f64 {
    let grid = |value: &dyn Fn(f64) -> f64| {
        (0..=resolution)
            .map(|i| value(i as f64 / resolution as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let v1: Vec<f64> = (0..2)
        .map(|x| grid(&|p| p * R[1][x][0] + (1.0 - p) * R[1][x][1] + alpha * binary_entropy(p)))
        .collect();
    let q0 = |x: usize, u: usize| R[0][x][u] + P[x][u][0] * v1[0] + P[x][u][1] * v1[1];
    let v0: Vec<f64> = (0..2)
        .map(|x| grid(&|p| p * q0(x, 0) + (1.0 - p) * q0(x, 1) + alpha * binary_entropy(p)))
        .collect();
    MU0[0] * v0[0] + MU0[1] * v0[1]
}

/// Soft-optimal policy of the oracle game by closed-form soft backups.
pub fn soft_optimal_policy(alpha: f64) -> Policy64 {
    let lse = |a: f64, b: f64| {
        let m = a.max(b);
        m + alpha * (((a - m) / alpha).exp() + ((b - m) / alpha).exp()).ln()
    };
    let v1: Vec<f64> = (0..2).map(|x| lse(R[1][x][0], R[1][x][1])).collect();
    let q = |t: usize, x: usize, u: usize| {
        if t == 1 {
            R[1][x][u]
        } else {
            R[0][x][u] + P[x][u][0] * v1[0] + P[x][u][1] * v1[1]
        }
    };
    Policy64::from_fn(2, 2, 2, |t, x, u| {
        let (a, b) = (q(t, x, 0), q(t, x, 1));
        let z = lse(a, b);
        ((q(t, x, u) - z) / alpha).exp()
    })
    .unwrap()
}

/// Game with mean-field independent random dynamics and the strictly
/// monotone reward `r(x, u) - crowd * mu(x)`.
pub fn monotone_game(nx: usize, nu: usize, horizon: usize, crowd: f64, seed: u64) -> MfgModel64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; nx * nu * nx];
    for row in p.chunks_mut(nx) {
        row.iter_mut().for_each(|v| *v = rng.gen::<f64>());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let r: Vec<f64> = (0..nx * nu).map(|_| rng.gen::<f64>()).collect();
    MfgModel64::from_fns(
        "monotone",
        nx,
        nu,
        horizon,
        vec![1.0 / nx as f64; nx],
        move |_, x, u, _, next: &mut [f64]| {
            next.copy_from_slice(&p[(x * nu + u) * nx..(x * nu + u + 1) * nx])
        },
        move |_, x, u, mf: &[f64]| r[x * nu + u] - crowd * mf[x],
    )
    .unwrap()
}

/// Small game whose transitions and rewards both depend on the mean field.
pub fn coupled_game(nx: usize, nu: usize, horizon: usize, seed: u64) -> MfgModel64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..horizon * nx * nu * nx)
        .map(|_| rng.gen::<f64>())
        .collect();
    let r: Vec<f64> = (0..horizon * nx * nu)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let mut mu0: Vec<f64> = (0..nx).map(|_| rng.gen::<f64>()).collect();
    let s: f64 = mu0.iter().sum();
    mu0.iter_mut().for_each(|m| *m /= s);
    MfgModel64::from_fns(
        "coupled",
        nx,
        nu,
        horizon,
        mu0,
        move |t, x, u, mf: &[f64], next: &mut [f64]| {
            let at = ((t * nx + x) * nu + u) * nx;
            for (y, slot) in next.iter_mut().enumerate() {
                *slot = base[at + y] + 0.5 * mf[y];
            }
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= s);
        },
        move |t, x, u, mf: &[f64]| r[(t * nx + x) * nu + u] + mf[x] - 2.0 * mf[(x + 1) % nx],
    )
    .unwrap()
}

/// Random policy with full-support rows drawn from `seed`.
pub fn random_policy(horizon: usize, nx: usize, nu: usize, seed: u64) -> Policy64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Policy64::from_fn(horizon, nx, nu, |_, _, _| rng.gen::<f64>() + 1e-3).unwrap()
}
