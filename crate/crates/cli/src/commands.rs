use mfg_core::algorithms::NewtonOptions;
use mfg_core::experiments::{rh_compare, rh_seq_vs_par, sweep_alpha, REGULARIZED_CONCEPTS};
use mfg_core::games::{default_probes, PRNG_ID};
use mfg_core::{
    delta_equilibrium, evaluate_all, gfp, gfpi, rh_parallel, rh_sequential, validate_model,
};
use serde_json::{json, Value};

use crate::config::{Algorithm, Resolved};
use crate::error::{CliResult, Failure};
use crate::output::{num, OutputDir};

/// Each command returns whether everything it solved reached tolerance.
pub type Converged = bool;

fn config_echo(cfg: &Resolved) -> CliResult<Value> {
    let mut echo = serde_json::to_value(&cfg.echo).map_err(Failure::config)?;
    echo["prng"] = json!(PRNG_ID);
    Ok(echo)
}

pub fn run(cfg: &Resolved) -> CliResult<Converged> {
    let model = cfg.checked_model()?;
    let out = OutputDir::create(&cfg.output_dir)?;
    let s = &cfg.solver;
    let result = match cfg.algorithm {
        Algorithm::Gfpi => gfpi(&model, s),
        Algorithm::Gfp => gfp(&model, s),
        Algorithm::RhSeq => rh_sequential(&model, s),
        Algorithm::RhPar => rh_parallel(&model, s),
    }?;
    out.write_trace(&result.trace)?;

    let final_delta = delta_equilibrium(&model, &result.final_policy, s.alpha, s.concept)?;
    let m = evaluate_all(&model, &result.final_policy, s.alpha)?;
    let doc = json!({
        "game": model.name(),
        "algorithm": cfg.algorithm,
        "concept": s.concept,
        "alpha": s.alpha,
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "final_delta": final_delta,
        "final_metrics": {
            "delta_qpire": m.delta_qpire,
            "delta_qstarre": m.delta_qstarre,
            "delta_re": m.delta_re,
            "exploitability": m.exploitability,
            "reg_exploitability": m.reg_exploitability,
        },
        "subgame_iterations": result.subgame_iterations,
        "policy": result.final_policy.to_nested(),
        "config": config_echo(cfg)?,
    });
    out.write_json("result.json", &doc)?;

    if let Some(ensemble) = &result.ensemble {
        let members: Vec<_> = ensemble.members().iter().map(|p| p.to_nested()).collect();
        out.write_json(
            "ensemble.json",
            &json!({
                "total_horizon": ensemble.total_horizon(),
                "lookahead": ensemble.lookahead(),
                "start_times": ensemble.start_times(),
                "start_mfs": ensemble.start_mfs(),
                "members": members,
            }),
        )?;
    }
    // For receding-horizon runs this is the full-game distance of the
    // implemented policy, not the windowed one the solver drives down.
    println!(
        "{} on {}: {} after {} iterations, full-game distance {:.3e}",
        s.concept,
        model.name(),
        if result.converged {
            "converged"
        } else {
            "not converged"
        },
        result.iterations_used,
        final_delta
    );
    Ok(result.converged)
}

pub fn sweep(cfg: &Resolved) -> CliResult<Converged> {
    let model = cfg.checked_model()?;
    let out = OutputDir::create(&cfg.output_dir)?;
    let entries = sweep_alpha(
        &model,
        &cfg.solver,
        &cfg.alphas,
        &REGULARIZED_CONCEPTS,
        &NewtonOptions::default(),
    )?;
    let (nx, nu) = (model.num_states(), model.num_actions());
    let mut rows = Vec::with_capacity(entries.len() * nx * nu);
    for e in &entries {
        println!(
            "alpha {:<10} {:<9} {} distance {:.3e}{}",
            e.alpha,
            e.concept,
            if e.converged {
                "converged"
            } else {
                "NOT CONVERGED"
            },
            e.delta,
            if e.refined { " (continuation)" } else { "" }
        );
        for x in 0..nx {
            for (u, &p) in e.initial_row(x).iter().enumerate() {
                rows.push(vec![
                    num(e.alpha),
                    e.concept.to_string(),
                    x.to_string(),
                    u.to_string(),
                    num(p),
                    e.converged.to_string(),
                    e.refined.to_string(),
                ]);
            }
        }
    }
    out.write_csv(
        "simplex.csv",
        &[
            "alpha",
            "concept",
            "state",
            "action",
            "prob",
            "converged",
            "refined",
        ],
        rows,
    )?;
    Ok(entries.iter().all(|e| e.converged))
}

pub fn compare_horizons(cfg: &Resolved) -> CliResult<Converged> {
    let model = cfg.checked_model()?;
    let out = OutputDir::create(&cfg.output_dir)?;
    let cmp = rh_compare(&model, &cfg.solver, &cfg.horizons)?;
    let rows = cmp.curves.iter().flat_map(|c| {
        c.points
            .iter()
            .map(move |&(k, d)| vec![c.horizon.to_string(), k.to_string(), num(d)])
    });
    out.write_csv("rh.csv", &["horizon", "iter", "distance"], rows)?;
    for c in &cmp.curves {
        println!(
            "H={:<3} final distance {:.3e}{}",
            c.horizon,
            c.final_distance(),
            if c.converged { "" } else { " (not converged)" }
        );
    }
    Ok(cmp.reference.converged && cmp.curves.iter().all(|c| c.converged))
}

pub fn seq_vs_par(cfg: &Resolved) -> CliResult<Converged> {
    let model = cfg.checked_model()?;
    let out = OutputDir::create(&cfg.output_dir)?;
    let r = rh_seq_vs_par(&model, &cfg.solver)?;
    let mut rows: Vec<Vec<String>> = r
        .start_times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![
                i.to_string(),
                t.to_string(),
                r.sequential_iterations[i].to_string(),
                r.parallel_iterations[i].to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        String::new(),
        r.sequential_total.to_string(),
        r.parallel_total.to_string(),
    ]);
    out.write_csv(
        "seqpar.csv",
        &[
            "subgame",
            "start_time",
            "sequential_iterations",
            "parallel_iterations",
        ],
        rows,
    )?;
    println!(
        "sequential {} vs parallel {} iterations over {} subgames; first subgame identical: {}",
        r.sequential_total,
        r.parallel_total,
        r.start_times.len(),
        r.first_subgame_identical
    );
    Ok(r.sequential.converged && r.parallel.converged)
}

pub fn validate(cfg: &Resolved) -> CliResult<Converged> {
    let model = cfg.build_model()?;
    let report = validate_model(&model, &default_probes(model.num_states()));
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(Failure::config)?
    );
    if report.is_valid() {
        Ok(true)
    } else {
        Err(Failure::config(format!(
            "game `{}` has {} violation(s)",
            model.name(),
            report.violations.len()
        )))
    }
}
