use std::path::Path;
use std::process::{Command, Output};

use mfg_core::{delta_equilibrium, evaluate_all, Concept, MfgModel64, Policy64};
use serde_json::Value;

fn mfg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("MFG_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn policy_of(v: &Value) -> Policy64 {
    let nested: Vec<Vec<Vec<f64>>> = serde_json::from_value(v.clone()).unwrap();
    Policy64::from_nested(&nested).unwrap()
}

fn sis() -> MfgModel64 {
    mfg_core::games::make_sis(&Default::default()).unwrap()
}

#[test]
fn sis_run_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(
        &[
            "run",
            "--game",
            "sis",
            "--algorithm",
            "gfp",
            "--concept",
            "re",
            "--alpha",
            "1.0",
            "--beta",
            "0.95",
            "--iterations",
            "2000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = dir.path().join("trace.csv");
    let (header, rows) = read_csv(&trace);
    assert_eq!(
        header.join(","),
        "iter,delta_qpire,delta_qstarre,delta_re,exploitability,reg_exploitability,wall_time_s"
    );
    assert!(*column(&trace, "delta_re").last().unwrap() <= 1e-3);

    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(result["converged"], Value::Bool(true));
    assert_eq!(result["config"]["prng"], mfg_core::games::PRNG_ID);
    let policy = policy_of(&result["policy"]);
    let model = sis();
    let delta = delta_equilibrium(&model, &policy, 1.0, Concept::Re).unwrap();
    assert!((delta - result["final_delta"].as_f64().unwrap()).abs() <= 1e-12);

    let m = evaluate_all(&model, &policy, 1.0).unwrap();
    let last = rows.last().unwrap();
    let recomputed = [
        m.delta_qpire,
        m.delta_qstarre,
        m.delta_re,
        m.exploitability,
        m.reg_exploitability,
    ];
    for (cell, value) in last[1..6].iter().zip(recomputed) {
        assert!((cell.parse::<f64>().unwrap() - value).abs() <= 1e-9);
    }
    assert!(!dir.path().join("ensemble.json").exists());
}

#[test]
fn rps_fixed_point_iteration_keeps_oscillating() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(
        &[
            "run",
            "--game",
            "rps",
            "--algorithm",
            "gfpi",
            "--concept",
            "qstar_re",
            "--alpha",
            "1.0",
            "--iterations",
            "1000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = column(&dir.path().join("trace.csv"), "delta_qstarre");
    assert_eq!(d.len(), 1001);
    let tail_min = d[d.len() - 500..]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    assert!(tail_min > 1e-2, "{tail_min}");
}

#[test]
fn invalid_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(&["run", "--game", "rps", "--beta", "1.5"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{"game": "rps", "beta": 1.5, "iterations": 3, "concept": "qpi_re"}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = mfg(&["run", "--config", cfg], dir.path());
    assert_eq!(code(&o), 2);

    let o = mfg(&["run", "--config", cfg, "--beta", "0.5"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(result["config"]["beta"], 0.5);
    assert_eq!(result["config"]["iterations"], 3);
    assert_eq!(result["concept"], "qpi_re");
    assert_eq!(result["game"], "rps");

    std::fs::write(dir.path().join("typo.json"), r#"{"bta": 0.5}"#).unwrap();
    let o = mfg(
        &[
            "run",
            "--config",
            dir.path().join("typo.json").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bta"));
}

#[test]
fn nonconvergence_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "--game",
        "rps",
        "--algorithm",
        "gfpi",
        "--iterations",
        "20",
    ];
    assert_eq!(code(&mfg(&args, dir.path())), 0);
    let mut strict = args.to_vec();
    strict.push("--require-convergence");
    let o = mfg(&strict, dir.path());
    assert_eq!(code(&o), 4);
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn missing_game_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(
        &["run", "--game", "file:/definitely/not/here.json"],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
}

#[test]
fn output_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(["run", "--game", "rps", "--iterations", "2"])
        .env("MFG_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn receding_horizon_run_writes_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(
        &[
            "run",
            "--game",
            "rps",
            "--algorithm",
            "rh-par",
            "--concept",
            "qpi_re",
            "--horizon-rh",
            "5",
            "--tolerance",
            "1e-3",
            "--iterations",
            "2000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ensemble = read_json(&dir.path().join("ensemble.json"));
    assert_eq!(
        ensemble["start_times"],
        serde_json::json!([0, 1, 2, 3, 4, 5])
    );

    // The trace's last row holds the worst windowed distance over subgames.
    let model = mfg_core::games::make_rps(&Default::default()).unwrap();
    let mut worst: f64 = 0.0;
    let starts = ensemble["start_times"].as_array().unwrap();
    for (i, t) in starts.iter().enumerate() {
        let start_mf: Vec<f64> = serde_json::from_value(ensemble["start_mfs"][i].clone()).unwrap();
        let window = model
            .window(t.as_u64().unwrap() as usize, 5, &start_mf)
            .unwrap();
        let member = policy_of(&ensemble["members"][i]);
        worst = worst.max(delta_equilibrium(&window, &member, 1.0, Concept::QpiRe).unwrap());
    }
    let last = *column(&dir.path().join("trace.csv"), "delta_qpire")
        .last()
        .unwrap();
    assert!((last - worst).abs() <= 1e-9);
    assert!(last <= 1e-3);
}

#[test]
fn sweep_alpha_writes_simplex_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(
        &[
            "sweep-alpha",
            "--game",
            "rps",
            "--alphas",
            "1e6,1.0",
            "--tolerance",
            "1e-6",
            "--iterations",
            "3000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("simplex.csv"));
    assert_eq!(header[..5], ["alpha", "concept", "state", "action", "prob"]);
    assert_eq!(rows.len(), 2 * 3 * 4 * 3);
    let row = |alpha: f64, concept: &str, state: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r[0].parse::<f64>().unwrap() == alpha && r[1] == concept && r[2] == state)
            .map(|r| r[4].parse().unwrap())
            .collect()
    };
    for concept in ["qpi_re", "qstar_re", "re"] {
        for state in ["0", "1", "2", "3"] {
            let hot = row(1e6, concept, state);
            assert!(hot.iter().map(|p| (p - 1.0 / 3.0).abs()).sum::<f64>() <= 1e-4);
        }
    }
    let warm: Vec<Vec<f64>> = ["qpi_re", "qstar_re", "re"]
        .iter()
        .map(|c| row(1.0, c, "0"))
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            let l1: f64 = warm[i]
                .iter()
                .zip(&warm[j])
                .map(|(a, b)| (a - b).abs())
                .sum();
            assert!(l1 >= 1e-3, "{l1}");
        }
    }
}

#[test]
fn rh_compare_is_deterministic_and_exact_at_full_window() {
    let base = [
        "rh-compare",
        "--game",
        "random",
        "--num-states",
        "6",
        "--num-actions",
        "3",
        "--horizon",
        "6",
        "--seed",
        "4",
        "--concept",
        "qpi_re",
        "--tolerance",
        "1e-8",
        "--iterations",
        "3000",
        "--horizons",
        "1,3,5",
        "--trace-every",
        "10",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&mfg(&base, a.path())), 0);
    assert_eq!(code(&mfg(&base, b.path())), 0);
    let ra = std::fs::read(a.path().join("rh.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.path().join("rh.csv")).unwrap());

    let (_, rows) = read_csv(&a.path().join("rh.csv"));
    let full = rows.iter().rfind(|r| r[0] == "5").unwrap();
    assert!(full[2].parse::<f64>().unwrap() <= 1e-8 + 1e-6);
}

#[test]
fn seq_vs_par_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfg(
        &[
            "rh-seq-vs-par",
            "--game",
            "rps",
            "--concept",
            "qpi_re",
            "--horizon-rh",
            "5",
            "--tolerance",
            "1e-3",
            "--iterations",
            "5000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("seqpar.csv"));
    assert_eq!(
        header,
        [
            "subgame",
            "start_time",
            "sequential_iterations",
            "parallel_iterations"
        ]
    );
    assert_eq!(rows.len(), 7);
    let total = rows.last().unwrap();
    let (seq, par): (f64, f64) = (total[2].parse().unwrap(), total[3].parse().unwrap());
    assert!(par < 0.4 * seq);

    for (extra, expected) in [
        (["--horizon-rh", "9"].as_slice(), None),
        (
            ["--horizon-rh", "5", "--tolerance", "inf"].as_slice(),
            Some("0"),
        ),
    ] {
        let mut args = vec!["rh-seq-vs-par", "--game", "rps"];
        args.extend(extra);
        let o = mfg(&args, dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let (_, rows) = read_csv(&dir.path().join("seqpar.csv"));
        let total = rows.last().unwrap();
        assert_eq!(total[2], total[3]);
        if let Some(v) = expected {
            assert_eq!(total[2], v);
        }
    }
}

#[test]
fn validate_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("leaky.json");
    std::fs::write(
        &game,
        r#"{"name": "leaky", "num_states": 2, "num_actions": 1, "horizon": 2,
            "initial_mf": [1.0, 0.0],
            "transitions": {"time-invariant": [[[0.5, 0.4]], [[0.0, 1.0]]]},
            "rewards": [[0.0], [1.0]]}"#,
    )
    .unwrap();
    let game_arg = format!("file:{}", game.display());
    let o = mfg(&["validate", "--game", &game_arg], dir.path());
    assert_eq!(code(&o), 2);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let v = &report["violations"][0];
    assert_eq!(
        (v["kind"].as_str(), v["x"].as_u64(), v["u"].as_u64()),
        (Some("transition_row"), Some(0), Some(0))
    );

    // The defective game still solves.
    let o = mfg(&["run", "--game", &game_arg, "--iterations", "5"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&mfg(&["validate", "--game", "sis"], dir.path())), 0);
}
