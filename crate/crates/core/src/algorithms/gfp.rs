use super::{Averaging, SolverConfig, SolverResult, TraceRecorder};
use crate::error::Result;
use crate::metrics::{best_response, delta_equilibrium, evaluate_all};
use crate::model::{normalize_in_place, MeanFieldFlow, MfgModel, Policy};
use crate::operators::mean_field_forward;
use crate::scalar::Scalar;

/// Running state of generalized fictitious play on one (sub)game.
#[derive(Debug, Clone)]
pub(crate) struct GfpState<S: Scalar> {
    pub(crate) model: MfgModel<S>,
    /// Normalized occupancy-weighted average policy.
    pub(crate) policy: Policy<S>,
    avg_mf: MeanFieldFlow<S>,
    /// Unnormalized `sum_k w_k mu_k(x) pi_k(u|x)`.
    weighted: Vec<S>,
    /// Plain average of the responses, used where no occupancy was ever recorded.
    unweighted: Vec<S>,
    steps: usize,
}

impl<S: Scalar> GfpState<S> {
    pub(crate) fn new(model: MfgModel<S>, initial: Policy<S>) -> Result<Self> {
        let mf = mean_field_forward(&model, &initial)?;
        let weighted = occupancy_weighted(&mf, &initial);
        let unweighted = initial.as_flat().to_vec();
        Ok(Self {
            model,
            policy: initial,
            avg_mf: mf,
            weighted,
            unweighted,
            steps: 0,
        })
    }

    /// Moves the (window) start distribution, overwriting the averaged flow's first row.
    pub(crate) fn relink(&mut self, model: MfgModel<S>) {
        self.avg_mf.at_mut(0).copy_from_slice(model.initial_mf());
        self.model = model;
    }

    pub(crate) fn step(&mut self, config: &SolverConfig<S>) -> Result<()> {
        let response = best_response(
            &self.model,
            &self.avg_mf,
            &self.policy,
            config.concept,
            config.alpha,
        )?;
        let induced = mean_field_forward(&self.model, &response)?;
        let w = match config.averaging {
            Averaging::Geometric => S::one() - config.beta,
            Averaging::Uniform => S::one() / S::from_usize(self.steps + 2).unwrap(),
        };
        let keep = S::one() - w;
        let fresh = occupancy_weighted(&induced, &response);
        for (acc, &new) in self.weighted.iter_mut().zip(&fresh) {
            *acc = keep * *acc + w * new;
        }
        for (acc, &new) in self.unweighted.iter_mut().zip(response.as_flat()) {
            *acc = keep * *acc + w * new;
        }
        for (acc, &new) in self.avg_mf.as_flat_mut().iter_mut().zip(induced.as_flat()) {
            *acc = keep * *acc + w * new;
        }
        self.steps += 1;
        self.renormalize();
        Ok(())
    }

    fn renormalize(&mut self) {
        let nu = self.policy.num_actions();
        let mut probs = self.weighted.clone();
        for (row, fallback) in probs.chunks_mut(nu).zip(self.unweighted.chunks(nu)) {
            if !normalize_in_place(row) {
                row.copy_from_slice(fallback);
                normalize_in_place(row);
            }
        }
        self.policy = Policy::from_raw(self.policy.horizon(), self.policy.num_states(), nu, probs);
    }

    pub(crate) fn delta(&self, config: &SolverConfig<S>) -> Result<S> {
        delta_equilibrium(&self.model, &self.policy, config.alpha, config.concept)
    }
}

fn occupancy_weighted<S: Scalar>(mf: &MeanFieldFlow<S>, policy: &Policy<S>) -> Vec<S> {
    let nu = policy.num_actions();
    let mut out = policy.as_flat().to_vec();
    for (i, row) in out.chunks_mut(nu).enumerate() {
        let t = i / policy.num_states();
        let x = i % policy.num_states();
        let m = mf.at(t)[x];
        row.iter_mut().for_each(|p| *p = *p * m);
    }
    out
}

/// Fictitious play loop on `model` from `initial`; shared with the sequential RH driver.
/// `observer` sees every iterate, starting with `initial` at `k = 0`.
pub(crate) fn run_gfp<S: Scalar>(
    model: MfgModel<S>,
    initial: Policy<S>,
    config: &SolverConfig<S>,
    observer: &mut dyn FnMut(usize, &Policy<S>),
) -> Result<SolverResult<S>> {
    let mut recorder = TraceRecorder::new(config.trace_every);
    let mut state = GfpState::new(model, initial)?;
    let mut converged;
    let mut k = 0;
    loop {
        let delta = state.delta(config)?;
        converged = delta <= config.tolerance;
        let last = converged || k == config.max_iterations;
        if recorder.wants(k, last) {
            recorder.record(k, &evaluate_all(&state.model, &state.policy, config.alpha)?);
        }
        observer(k, &state.policy);
        if last {
            break;
        }
        state.step(config)?;
        k += 1;
    }
    Ok(SolverResult::plain(
        state.policy,
        recorder.finish(),
        converged,
        k,
    ))
}

/// Generalized fictitious play.
///
/// Each iteration best-responds to the averaged mean field, then folds the
/// response into an occupancy-weighted policy average and the induced flow
/// into the mean field average. The reported iterate is the normalized
/// policy average.
pub fn gfp<S: Scalar>(model: &MfgModel<S>, config: &SolverConfig<S>) -> Result<SolverResult<S>> {
    config.validate(model)?;
    let initial = config.initial_policy_for(model);
    run_gfp(model.clone(), initial, config, &mut |_, _| {})
}
