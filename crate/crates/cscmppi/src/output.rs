//! On-disk records: per-step trajectory logs, sample traces, benchmark
//! summaries and timings.
//!
//! Summary files hold only quantities that are a function of the scenario,
//! controller and seeds, so reruns are byte-identical. Wall-clock numbers go
//! to a separate timing file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use cscmppi_core::controller::{ControllerKind, StepOutput};
use cscmppi_core::dynamics::{DiffDrive, Dynamics};
use cscmppi_core::sim::{BenchmarkSummary, EpisodeResult, Outcome, StepObserver, StepRecord};
use cscmppi_core::types::{Control, State};
use serde::{Deserialize, Serialize};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

fn xyt(s: &State) -> [f64; 3] {
    [s.x(), s.y(), s.theta()]
}

fn vw(u: &Control) -> [f64; 2] {
    u.to_array()
}

/// One line of an episode trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLine {
    pub step: usize,
    pub sim_time: f64,
    pub state: [f64; 3],
    pub applied: [f64; 2],
    /// State after applying `applied` for one time step.
    pub next_state: [f64; 3],
    pub selected_cost: f64,
    pub selected_feasible: bool,
    pub selected_max_violation: f64,
    /// Number of DBSCAN clusters `M`; zero for controllers without clustering.
    pub clusters: usize,
    pub noise_count: usize,
    pub projection_sweeps: usize,
    pub projection_converged: usize,
    pub fallback_used: bool,
    pub compute_time_s: f64,
}

pub fn step_lines(result: &EpisodeResult) -> Vec<StepLine> {
    result
        .records
        .iter()
        .zip(result.states.iter().skip(1))
        .map(|(r, next)| StepLine {
            step: r.step,
            sim_time: r.sim_time,
            state: xyt(&r.state),
            applied: vw(&r.applied),
            next_state: xyt(next),
            selected_cost: r.selected_cost,
            selected_feasible: r.selected_feasible,
            selected_max_violation: r.selected_max_violation,
            clusters: r.clusters,
            noise_count: r.noise,
            projection_sweeps: r.projection_sweeps_max,
            projection_converged: r.projection_converged,
            fallback_used: r.fallback_used,
            compute_time_s: r.compute_time_s,
        })
        .collect()
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line?;
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// Largest state difference when replaying the logged controls from the
/// first logged state through the model.
pub fn replay_error(lines: &[StepLine], dt: f64) -> anyhow::Result<f64> {
    let model = DiffDrive::new(dt)?;
    let Some(first) = lines.first() else { return Ok(0.0) };
    let mut x = State::new(first.state[0], first.state[1], first.state[2]);
    let mut worst = 0.0f64;
    let mut compare = |logged: &[f64; 3], x: &State| {
        for (a, b) in logged.iter().zip(xyt(x)) {
            worst = worst.max((a - b).abs());
        }
    };
    for line in lines {
        compare(&line.state, &x);
        x = model.step(&x, &Control::from_array(line.applied));
        compare(&line.next_state, &x);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLine {
    pub index: usize,
    pub seed: u64,
    pub outcome: String,
    /// Present for controller errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: usize,
    pub path_length: f64,
    pub final_state: [f64; 3],
    pub infeasible_selections: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub reached: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub controller_errors: usize,
    pub collision_rate: f64,
    /// Over episodes that reached the goal; `null` when none did.
    pub mean_path_length: Option<f64>,
    /// Fraction of control steps whose selected sequence was feasible.
    pub constraint_satisfaction_rate: f64,
    pub control_steps: usize,
    pub infeasible_selections: usize,
    pub episodes_with_infeasible_selection: usize,
}

/// `summary.json`: deterministic for a given scenario, controller and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub scenario: String,
    pub controller: String,
    pub samples: usize,
    pub seed_base: u64,
    pub metrics: Metrics,
    pub episodes: Vec<EpisodeLine>,
}

impl SummaryFile {
    pub fn new(scenario: &str, kind: ControllerKind, samples: usize, seed_base: u64, summary: &BenchmarkSummary, results: &[EpisodeResult]) -> Self {
        let episodes: Vec<EpisodeLine> = results
            .iter()
            .enumerate()
            .map(|(index, r)| EpisodeLine {
                index,
                seed: r.seed,
                outcome: r.outcome.name().to_string(),
                error: match &r.outcome {
                    Outcome::ControllerError(msg) => Some(msg.clone()),
                    _ => None,
                },
                steps: r.steps,
                path_length: r.path_length,
                final_state: xyt(r.states.last().expect("episodes start with a state")),
                infeasible_selections: r.records.len() - r.feasible_selections(),
                collision_step: r.collision_step,
            })
            .collect();
        SummaryFile {
            schema_version: OUTPUT_SCHEMA_VERSION,
            scenario: scenario.to_string(),
            controller: kind.name().to_string(),
            samples,
            seed_base,
            metrics: Metrics {
                episodes: summary.episodes,
                reached: summary.reached,
                collisions: summary.collisions,
                timeouts: summary.timeouts,
                controller_errors: summary.controller_errors,
                collision_rate: summary.collision_rate,
                mean_path_length: summary.mean_path_length,
                constraint_satisfaction_rate: summary.constraint_satisfaction_rate,
                control_steps: summary.control_steps,
                infeasible_selections: summary.infeasible_selections,
                episodes_with_infeasible_selection: episodes.iter().filter(|e| e.infeasible_selections > 0).count(),
            },
            episodes,
        }
    }
}

/// `timing.json`: wall-clock seconds per controller iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingFile {
    pub schema_version: u32,
    /// Over episodes that reached the goal.
    pub mean_compute_time_s: Option<f64>,
    pub max_compute_time_s: Option<f64>,
    /// Over every control step of every episode.
    pub all_steps_mean_compute_time_s: Option<f64>,
    pub all_steps_max_compute_time_s: Option<f64>,
}

impl TimingFile {
    pub fn new(summary: &BenchmarkSummary, results: &[EpisodeResult]) -> Self {
        let all: Vec<f64> = results.iter().flat_map(|r| r.compute_times()).collect();
        TimingFile {
            schema_version: OUTPUT_SCHEMA_VERSION,
            mean_compute_time_s: summary.mean_compute_time_s,
            max_compute_time_s: summary.max_compute_time_s,
            all_steps_mean_compute_time_s: (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64),
            all_steps_max_compute_time_s: all.iter().copied().reduce(f64::max),
        }
    }
}

/// One row of the controller by sample-count table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub controller: String,
    pub samples: usize,
    pub episodes: usize,
    pub collision_rate: f64,
    pub mean_path_length: Option<f64>,
    pub mean_compute_time_s: Option<f64>,
    pub max_compute_time_s: Option<f64>,
    pub constraint_satisfaction_rate: f64,
}

impl TableRow {
    pub fn new(kind: ControllerKind, samples: usize, summary: &BenchmarkSummary) -> Self {
        TableRow {
            controller: kind.name().to_string(),
            samples,
            episodes: summary.episodes,
            collision_rate: summary.collision_rate,
            mean_path_length: summary.mean_path_length,
            mean_compute_time_s: summary.mean_compute_time_s,
            max_compute_time_s: summary.max_compute_time_s,
            constraint_satisfaction_rate: summary.constraint_satisfaction_rate,
        }
    }
}

/// One sampled rollout in a trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub rollout: Vec<[f64; 3]>,
    pub cost: f64,
    /// Cluster index, or `null` for DBSCAN noise and for controllers without clustering.
    pub label: Option<usize>,
}

/// One line of a per-step sample trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub step: usize,
    pub state: [f64; 3],
    pub clustered: bool,
    pub eps: f64,
    pub cluster_sizes: Vec<usize>,
    pub cluster_costs: Vec<f64>,
    pub samples: Vec<TraceSample>,
    pub selected_rollout: Vec<[f64; 3]>,
    pub selected_feasible: bool,
}

impl TraceLine {
    pub fn new(record: &StepRecord, output: &StepOutput) -> Self {
        let batch = &output.batch;
        let d = &output.diagnostics;
        let clustered = !output.labels.is_empty();
        TraceLine {
            step: record.step,
            state: xyt(&record.state),
            clustered,
            eps: d.eps,
            cluster_sizes: d.cluster_sizes.clone(),
            cluster_costs: d.cluster_costs.clone(),
            samples: (0..batch.len())
                .map(|k| TraceSample {
                    rollout: batch.rollouts[k].iter().map(xyt).collect(),
                    cost: batch.costs[k],
                    label: if clustered { output.labels[k] } else { None },
                })
                .collect(),
            selected_rollout: output.rollout.iter().map(xyt).collect(),
            selected_feasible: d.selected_feasible,
        }
    }
}

/// Streams a trace line every `stride` control steps to a JSONL file.
pub struct TraceWriter {
    path: PathBuf,
    out: Option<BufWriter<File>>,
    stride: usize,
    pub error: Option<anyhow::Error>,
}

impl TraceWriter {
    pub fn create(path: PathBuf, stride: usize) -> Self {
        let (out, error) = match create(&path) {
            Ok(w) => (Some(w), None),
            Err(e) => (None, Some(e)),
        };
        TraceWriter {
            path,
            out,
            stride: stride.max(1),
            error,
        }
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let Some(mut w) = self.out.take() {
            w.flush().with_context(|| format!("cannot write {}", self.path.display()))?;
        }
        Ok(())
    }
}

impl StepObserver for TraceWriter {
    fn on_step(&mut self, record: &StepRecord, output: &StepOutput) {
        if !record.step.is_multiple_of(self.stride) {
            return;
        }
        let Some(w) = self.out.as_mut() else { return };
        let written = serde_json::to_writer(&mut *w, &TraceLine::new(record, output))
            .map_err(anyhow::Error::from)
            .and_then(|()| w.write_all(b"\n").map_err(anyhow::Error::from));
        if let Err(e) = written {
            self.error = Some(e.context(format!("cannot write {}", self.path.display())));
            self.out = None;
        }
    }
}
