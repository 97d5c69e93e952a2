use std::path::{Path, PathBuf};

use cscmppi::cli::{main_with_args, EXIT_EPISODE_FAILURE, EXIT_OK, EXIT_USAGE};
use cscmppi::output::{read_jsonl, replay_error, StepLine, TraceLine};
use cscmppi::scenario::scenario_to_toml;
use cscmppi_core::sim::{builtin_environment, EnvId};

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("cscmppi").chain(args.iter().copied()))
}

/// A short env1 scenario so tests stay quick.
fn short_scenario(dir: &Path, max_steps: usize) -> PathBuf {
    let mut s = builtin_environment(EnvId::Env1);
    s.max_steps = max_steps;
    s.controller.mppi.samples = 40;
    let path = dir.join("short.toml");
    std::fs::write(&path, scenario_to_toml(&s)).unwrap();
    path
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["--scenario", "env1", "--controller", "bogus"]), EXIT_USAGE);
    assert_eq!(run(&["--scenario", "env9"]), EXIT_USAGE);
    assert_eq!(run(&["--scenario", "env1", "--episodes", "0"]), EXIT_USAGE);
    assert_eq!(run(&["--scenario", "env1", "--samples", "0"]), EXIT_USAGE);
}

#[test]
fn help_and_print_scenario_exit_zero() {
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["--scenario", "env2", "--print-scenario"]), EXIT_OK);
}

#[test]
fn strict_mode_reports_unfinished_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), 5);
    let out = dir.path().join("out");
    let common = ["--scenario", scenario.to_str().unwrap(), "--episodes", "1", "-q", "--out", out.to_str().unwrap()];
    assert_eq!(run(&common), EXIT_OK);
    let strict: Vec<&str> = common.iter().copied().chain(["--strict"]).collect();
    assert_eq!(run(&strict), EXIT_EPISODE_FAILURE);
}

#[test]
fn run_writes_replayable_logs_and_labelled_traces() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), 40);
    let out = dir.path().join("out");
    let code = run(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--controller",
        "csc",
        "--controller",
        "standard",
        "--episodes",
        "2",
        "--trace",
        "--trace-stride",
        "10",
        "-q",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);

    let run_dir = out.join("env1-csc-k40");
    for f in ["scenario.toml", "summary.json", "timing.json", "episodes/episode_0000.jsonl", "episodes/episode_0001.jsonl"] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }
    assert!(out.join("env1-standard-k40/summary.json").is_file());

    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("table.json")).unwrap()).unwrap();
    assert_eq!(table.as_array().unwrap().len(), 2);

    let lines: Vec<StepLine> = read_jsonl(&run_dir.join("episodes/episode_0000.jsonl")).unwrap();
    assert_eq!(lines.len(), 40);
    assert!(replay_error(&lines, 0.03).unwrap() <= 1e-9);

    let trace: Vec<TraceLine> = read_jsonl(&run_dir.join("traces/episode_0000.jsonl")).unwrap();
    assert_eq!(trace.iter().map(|t| t.step).collect::<Vec<_>>(), vec![0, 10, 20, 30]);
    for t in &trace {
        assert!(t.clustered);
        assert_eq!(t.samples.len(), 40);
        assert!(t.samples.iter().any(|s| s.label.is_some()));
        assert_eq!(t.samples[0].rollout.len(), 31);
        for s in &t.samples {
            assert!(s.label.is_none_or(|l| l < t.cluster_sizes.len()));
        }
    }

    let std_trace: Vec<TraceLine> = read_jsonl(&out.join("env1-standard-k40/traces/episode_0000.jsonl")).unwrap();
    assert!(std_trace.iter().all(|t| !t.clustered && t.samples.iter().all(|s| s.label.is_none())));
}

#[test]
fn summary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), 30);
    let read = |sub: &str, jobs: &str| {
        let out = dir.path().join(sub);
        let code = run(&["--scenario", scenario.to_str().unwrap(), "--episodes", "3", "--jobs", jobs, "-q", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        let mut lines: Vec<StepLine> = read_jsonl(&out.join("env1-csc-k40/episodes/episode_0002.jsonl")).unwrap();
        for l in &mut lines {
            l.compute_time_s = 0.0;
        }
        (String::from_utf8(std::fs::read(out.join("env1-csc-k40/summary.json")).unwrap()).unwrap(), lines)
    };
    let a = read("a", "1");
    assert_eq!(a, read("b", "1"));
    assert_eq!(a, read("c", "3"));
}

#[test]
fn replay_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), 10);
    let out = dir.path().join("out");
    assert_eq!(run(&["--scenario", scenario.to_str().unwrap(), "--episodes", "1", "-q", "--out", out.to_str().unwrap()]), EXIT_OK);
    let mut lines: Vec<StepLine> = read_jsonl(&out.join("env1-csc-k40/episodes/episode_0000.jsonl")).unwrap();
    lines[3].applied[0] += 0.1;
    assert!(replay_error(&lines, 0.03).unwrap() > 1e-4);
}
