//! The `cscmppi` command.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use cscmppi_core::controller::ControllerKind;
use cscmppi_core::sim::{Outcome, Scenario};

use crate::bench::run_parallel;
use crate::output::{replay_error, step_lines, write_json, write_jsonl, SummaryFile, TableRow, TimingFile, TraceWriter};
use crate::scenario::{resolve_scenario, scenario_to_toml};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EPISODE_FAILURE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Standard,
    Csc,
    CscNoDbscan,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Standard => ControllerKind::Standard,
            ControllerArg::Csc => ControllerKind::Csc,
            ControllerArg::CscNoDbscan => ControllerKind::CscNoDbscan,
        }
    }
}

/// Closed-loop benchmarks of MPPI and CSC-MPPI on planar obstacle courses.
#[derive(Debug, Clone, Parser)]
#[command(name = "cscmppi", version)]
pub struct Args {
    /// Built-in environment (`env1`, `env2`) or a scenario TOML file.
    #[arg(long)]
    pub scenario: String,
    /// Controller; repeat to benchmark several.
    #[arg(long, value_enum, default_value = "csc")]
    pub controller: Vec<ControllerArg>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    /// First episode seed; defaults to the scenario's `seed_base`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the sample count K; repeat for a sweep.
    #[arg(long)]
    pub samples: Vec<usize>,
    /// Output directory.
    #[arg(long, env = "CSCMPPI_OUT", default_value = "cscmppi-out")]
    pub out: PathBuf,
    /// Write per-step sample traces (rollouts, costs, cluster labels).
    #[arg(long)]
    pub trace: bool,
    /// Trace every n-th control step.
    #[arg(long, default_value_t = 1)]
    pub trace_stride: usize,
    /// Exit with status 2 if any episode fails to reach the goal.
    #[arg(long)]
    pub strict: bool,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the resolved scenario as TOML and exit.
    #[arg(long)]
    pub print_scenario: bool,
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario_source: String,
    pub scenario: Scenario,
    pub controllers: Vec<ControllerKind>,
    pub samples: Vec<usize>,
    pub episodes: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub trace_stride: usize,
    pub strict: bool,
    pub jobs: Option<usize>,
    /// 0 quiet, 1 one line per run, 2 one line per episode.
    pub verbosity: u8,
}

impl RunConfig {
    pub fn from_args(args: &Args) -> anyhow::Result<Self> {
        let scenario = resolve_scenario(&args.scenario)?;
        if args.episodes == 0 {
            anyhow::bail!("--episodes must be at least 1");
        }
        if args.samples.contains(&0) {
            anyhow::bail!("--samples must be at least 1");
        }
        let mut controllers: Vec<ControllerKind> = Vec::new();
        for c in &args.controller {
            let kind = ControllerKind::from(*c);
            if !controllers.contains(&kind) {
                controllers.push(kind);
            }
        }
        let mut samples: Vec<usize> = Vec::new();
        for &k in &args.samples {
            if !samples.contains(&k) {
                samples.push(k);
            }
        }
        if samples.is_empty() {
            samples.push(scenario.controller.mppi.samples);
        }
        Ok(RunConfig {
            scenario_source: args.scenario.clone(),
            seed: args.seed.unwrap_or(scenario.seed_base),
            scenario,
            controllers,
            samples,
            episodes: args.episodes,
            out: args.out.clone(),
            trace: args.trace,
            trace_stride: args.trace_stride.max(1),
            strict: args.strict,
            jobs: args.jobs,
            verbosity: if args.quiet { 0 } else { 1 + args.verbose },
        })
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<TableRow>,
    pub failed_episodes: usize,
    pub run_dirs: Vec<PathBuf>,
}

fn run_dir_name(scenario: &str, kind: ControllerKind, samples: usize) -> String {
    format!("{scenario}-{}-k{samples}", kind.name())
}

/// Runs every (controller, K) combination and writes its artifacts under `config.out`.
pub fn run_command(config: &RunConfig) -> anyhow::Result<RunReport> {
    std::fs::create_dir_all(&config.out).with_context(|| format!("cannot create {}", config.out.display()))?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.jobs {
            b = b.num_threads(n);
        }
        b.build()?
    };
    let mut report = RunReport {
        rows: Vec::new(),
        failed_episodes: 0,
        run_dirs: Vec::new(),
    };
    let dt = config.scenario.dt();
    for &kind in &config.controllers {
        for &samples in &config.samples {
            let mut scenario = config.scenario.clone();
            scenario.controller.mppi.samples = samples;
            let dir = config.out.join(run_dir_name(&scenario.name, kind, samples));
            let episodes_dir = dir.join("episodes");
            std::fs::create_dir_all(&episodes_dir).with_context(|| format!("cannot create {}", episodes_dir.display()))?;
            let traces_dir = dir.join("traces");
            if config.trace {
                std::fs::create_dir_all(&traces_dir).with_context(|| format!("cannot create {}", traces_dir.display()))?;
            }
            std::fs::write(dir.join("scenario.toml"), scenario_to_toml(&scenario))
                .with_context(|| format!("cannot write {}", dir.join("scenario.toml").display()))?;

            let (summary, results, traces) = pool.install(|| {
                run_parallel(&scenario, kind, config.episodes, config.seed, |i| {
                    config
                        .trace
                        .then(|| TraceWriter::create(traces_dir.join(format!("episode_{i:04}.jsonl")), config.trace_stride))
                })
            })?;
            for trace in traces.into_iter().flatten() {
                trace.finish()?;
            }
            for (i, r) in results.iter().enumerate() {
                let lines = step_lines(r);
                let err = replay_error(&lines, dt)?;
                anyhow::ensure!(err <= 1e-9, "episode {i} log does not replay: error {err:e}");
                write_jsonl(&episodes_dir.join(format!("episode_{i:04}.jsonl")), &lines)?;
                if config.verbosity >= 2 {
                    eprintln!("  episode {i} seed {} {} steps {} path {:.3} m", r.seed, r.outcome.name(), r.steps, r.path_length);
                }
            }
            write_json(&dir.join("summary.json"), &SummaryFile::new(&scenario.name, kind, samples, config.seed, &summary, &results))?;
            write_json(&dir.join("timing.json"), &TimingFile::new(&summary, &results))?;

            report.failed_episodes += results.iter().filter(|r| r.outcome != Outcome::Reached).count();
            let row = TableRow::new(kind, samples, &summary);
            if config.verbosity >= 1 {
                eprintln!(
                    "{} {} K={}: collision rate {:.2}, reached {}/{}, satisfaction {:.4}, path {}",
                    scenario.name,
                    kind.name(),
                    samples,
                    row.collision_rate,
                    summary.reached,
                    summary.episodes,
                    row.constraint_satisfaction_rate,
                    row.mean_path_length.map_or("-".to_string(), |l| format!("{l:.3} m")),
                );
            }
            report.rows.push(row);
            report.run_dirs.push(dir);
        }
    }
    write_json(&config.out.join("table.json"), &report.rows)?;
    Ok(report)
}

/// Parses `argv`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let config = match RunConfig::from_args(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    if args.print_scenario {
        print!("{}", scenario_to_toml(&config.scenario));
        return EXIT_OK;
    }
    match run_command(&config) {
        Ok(report) if config.strict && report.failed_episodes > 0 => {
            eprintln!("{} episode(s) did not reach the goal", report.failed_episodes);
            EXIT_EPISODE_FAILURE
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
