use std::path::Path;

use cscmppi::scenario::{load_scenario, parse_scenario, resolve_scenario, scenario_to_toml, ScenarioError};
use cscmppi_core::sim::{builtin_environment, EnvId};

fn env_text(id: EnvId) -> String {
    scenario_to_toml(&builtin_environment(id))
}

#[test]
fn builtin_environments_round_trip() {
    for id in [EnvId::Env1, EnvId::Env2] {
        let original = builtin_environment(id);
        let text = scenario_to_toml(&original);
        let parsed = parse_scenario(&text, Path::new("mem.toml")).unwrap();
        assert_eq!(parsed, original);
        assert_eq!(scenario_to_toml(&parsed), text);
    }
}

#[test]
fn load_from_disk_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env1.toml");
    std::fs::write(&path, env_text(EnvId::Env1)).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), builtin_environment(EnvId::Env1));
    assert_eq!(resolve_scenario(path.to_str().unwrap()).unwrap(), builtin_environment(EnvId::Env1));
    assert_eq!(resolve_scenario("env2").unwrap(), builtin_environment(EnvId::Env2));
}

#[test]
fn missing_file_is_io_error() {
    let err = load_scenario(Path::new("/nonexistent/nowhere.toml")).unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
}

#[test]
fn negative_radius_names_key_and_line() {
    let text = env_text(EnvId::Env2).replace("radius = 0.5", "radius = -0.5");
    let line = text.lines().position(|l| l.starts_with("radius = -0.5")).unwrap() + 1;
    match parse_scenario(&text, Path::new("bad.toml")).unwrap_err() {
        ScenarioError::Invalid { location, .. } => {
            assert_eq!(location.key.as_deref(), Some("scenario.obstacles[0].radius"));
            assert_eq!(location.line, Some(line));
            let shown = location.to_string();
            assert!(shown.contains("bad.toml") && shown.contains("scenario.obstacles[0].radius"), "{shown}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_positive_lambda_is_rejected_with_key() {
    let text: String = env_text(EnvId::Env1)
        .lines()
        .map(|l| if l.starts_with("lambda") { "lambda = 0.0\n".to_string() } else { format!("{l}\n") })
        .collect();
    match parse_scenario(&text, Path::new("bad.toml")).unwrap_err() {
        ScenarioError::Invalid { location, .. } => assert_eq!(location.key.as_deref(), Some("mppi.lambda")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_key_is_rejected() {
    let text: String = env_text(EnvId::Env1).lines().filter(|l| !l.starts_with("lambda")).map(|l| format!("{l}\n")).collect();
    let err = parse_scenario(&text, Path::new("bad.toml")).unwrap_err();
    assert!(matches!(err, ScenarioError::Syntax { .. }), "{err:?}");
    assert!(err.to_string().contains("lambda"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let text = env_text(EnvId::Env1).replace("[mppi]\n", "[mppi]\ntemperature = 1.0\n");
    let err = parse_scenario(&text, Path::new("bad.toml")).unwrap_err();
    assert!(matches!(err, ScenarioError::Syntax { .. }), "{err:?}");
    assert!(err.to_string().contains("temperature"), "{err}");
}

#[test]
fn wrong_schema_version_is_rejected() {
    let text = env_text(EnvId::Env1).replace("schema_version = 1", "schema_version = 2");
    match parse_scenario(&text, Path::new("bad.toml")).unwrap_err() {
        ScenarioError::Version { found, location } => {
            assert_eq!(found, 2);
            assert_eq!(location.line, Some(1));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn start_inside_obstacle_is_rejected() {
    let text = env_text(EnvId::Env2).replace("start = [-1.0, 0.0, 0.0]", "start = [0.1, 0.0, 0.0]");
    assert!(matches!(parse_scenario(&text, Path::new("bad.toml")).unwrap_err(), ScenarioError::Invalid { .. }));
}
