use mfg_core::games::{
    default_probes, load_game, make_random, make_rps, make_sis, RandomMfgParams, RpsParams,
    SisParams,
};
use mfg_core::model::Violation;
use mfg_core::operators::{mean_field_forward, q_optimal};
use mfg_core::{validate_model, MfgError, MfgModel64, Policy64};

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn builtin_games_pass_validation_on_probes() {
    let sis = make_sis::<f64>(&SisParams::default()).unwrap();
    let rps = make_rps::<f64>(&RpsParams::default()).unwrap();
    let random = make_random::<f64>(&RandomMfgParams::default()).unwrap();
    for model in [sis, rps, random] {
        let report = validate_model(&model, &default_probes(model.num_states()));
        assert!(
            report.is_valid(),
            "{}: {:?}",
            model.name(),
            report.violations
        );
    }
}

#[test]
fn loads_per_stage_game_with_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "crowd.json",
        r#"{
            "name": "crowd",
            "num_states": 2,
            "num_actions": 2,
            "horizon": 2,
            "initial_mf": [0.5, 0.5],
            "transitions": [
                [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]],
                [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
            ],
            "rewards": [[[0.0, 0.0], [1.0, 1.0]], [[0.0, 0.0], [1.0, 1.0]]],
            "coupling": {
                "log_barrier": {"eta": 1.0, "floor": 1e-10},
                "linear": {"matrix": [[0.0, 2.0], [0.0, 0.0]]}
            }
        }"#,
    );
    let model: MfgModel64 = load_game(&path).unwrap();
    assert_eq!(model.name(), "crowd");
    let mf = [0.25, 0.75];
    // table + (C mu)(x) - eta ln mu(x)
    assert!((model.reward(0, 0, 1, &mf) - (1.5 - 0.25f64.ln())).abs() < 1e-15);
    assert!((model.reward(1, 1, 0, &mf) - (1.0 - 0.75f64.ln())).abs() < 1e-15);
    let mut next = [0.0; 2];
    model.transition(0, 1, 0, &mf, &mut next);
    assert_eq!(next, [1.0, 0.0]);

    // Action u moves the agent to state u; stage-1 rewards ignore the action.
    let flow = mean_field_forward(&model, &Policy64::uniform_for(&model)).unwrap();
    let q = q_optimal(&model, &flow).unwrap();
    for x in 0..2 {
        for u in 0..2 {
            let expected = model.reward(0, x, u, flow.at(0)) + model.reward(1, u, 0, flow.at(1));
            assert!((q.get(0, x, u) - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn off_simplex_row_loads_and_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "leaky.json",
        r#"{"name": "leaky", "num_states": 2, "num_actions": 1, "horizon": 2,
            "initial_mf": [1.0, 0.0],
            "transitions": [[[0.5, 0.4]], [[0.0, 1.0]]],
            "rewards": [[0.0], [1.0]]}"#,
    );
    let model: MfgModel64 = load_game(&path).unwrap();
    let report = validate_model(&model, &default_probes(2));
    assert!(!report.is_valid());
    assert!(report
        .violations
        .iter()
        .all(|v| matches!(v, Violation::TransitionRow { x: 0, u: 0, .. })));
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(&dir, "empty.json", "");
    assert!(matches!(
        load_game::<f64>(&empty),
        Err(MfgError::Parse { .. })
    ));
    let typo = write(
        &dir,
        "typo.json",
        "{\"name\": \"x\",\n \"num_states\": \"two\"}",
    );
    let err = load_game::<f64>(&typo).unwrap_err().to_string();
    assert!(err.contains("num_states"), "{err}");
    assert!(err.contains("line 2"), "{err}");
    assert!(load_game::<f64>(dir.path().join("missing.json")).is_err());
}
