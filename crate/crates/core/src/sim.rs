//! Closed-loop simulation: apply the first input of each optimised sequence,
//! advance the robot and the obstacles, and record what happened.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::clustering::ClusterParams;
use crate::controller::{Controller, ControllerConfig, ControllerKind, StepOutput};
use crate::costs::{ConstraintSet, ControlPenalty, CostConfig, QuadraticWeights};
use crate::dynamics::{predict_obstacle, DiffDrive, Dynamics, Obstacle, RouteEnd};
use crate::mppi::{shift_sequence, MppiParams};
use crate::projection::ProjectionParams;
use crate::rng::derive_seed;
use crate::types::{Control, ControlBounds, ControlSequence, NoiseCovariance, Point2, State};
use crate::{Error, Result};

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

/// A clock that never advances; timings come out as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub start: State,
    pub goal: State,
    /// Position tolerance of the goal check, metres.
    pub goal_tol_pos: f64,
    /// Heading tolerance of the goal check, radians.
    pub goal_tol_theta: f64,
    /// Obstacles at time zero.
    pub obstacles: Vec<Obstacle>,
    /// Radius of the disc used for collision checks.
    pub robot_radius: f64,
    /// Extra clearance on top of `robot_radius` when growing obstacles for the controller.
    pub safety_margin: f64,
    pub max_steps: usize,
    pub controller: ControllerConfig,
    pub seed_base: u64,
}

impl Scenario {
    pub fn inflation(&self) -> f64 {
        self.robot_radius + self.safety_margin
    }

    pub fn dt(&self) -> f64 {
        self.controller.mppi.dt
    }

    pub fn model(&self) -> Result<DiffDrive> {
        DiffDrive::new(self.dt())
    }

    /// Obstacles after `t` seconds of true motion.
    pub fn obstacles_at(&self, t: f64) -> Vec<Obstacle> {
        self.obstacles.iter().map(|o| predict_obstacle(o, t)).collect()
    }

    pub fn constraints_at(&self, t: f64) -> Result<ConstraintSet> {
        ConstraintSet::new(self.obstacles_at(t), self.controller.mppi.bounds, self.inflation())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.goal.is_finite()) {
            return Err(Error::NonFinite("start/goal"));
        }
        if !(self.goal_tol_pos > 0.0 && self.goal_tol_theta > 0.0) {
            return Err(Error::invalid("goal tolerance", "must be positive"));
        }
        if !(self.robot_radius.is_finite() && self.robot_radius >= 0.0) {
            return Err(Error::invalid("robot_radius", "must be non-negative"));
        }
        if !(self.safety_margin.is_finite() && self.safety_margin >= 0.0) {
            return Err(Error::invalid("safety_margin", "must be non-negative"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be at least 1"));
        }
        for o in &self.obstacles {
            if !(o.radius.is_finite() && o.radius > 0.0) {
                return Err(Error::invalid("obstacle radius", "must be positive"));
            }
            let reach = o.radius + self.inflation();
            if self.start.position().distance(o.center) < reach {
                return Err(Error::invalid("start", "inside an inflated obstacle"));
            }
            if o.is_static() && self.goal.position().distance(o.center) < reach {
                return Err(Error::invalid("goal", "inside an inflated obstacle"));
            }
        }
        self.controller.validate()
    }

    pub fn at_goal(&self, x: &State) -> bool {
        let e = x.error_to(&self.goal);
        libm::hypot(e[0], e[1]) <= self.goal_tol_pos && e[2].abs() <= self.goal_tol_theta
    }

    /// True when the robot disc overlaps any obstacle disc.
    pub fn in_collision(&self, x: &State, obstacles: &[Obstacle]) -> bool {
        obstacles
            .iter()
            .any(|o| x.position().distance(o.center) < self.robot_radius + o.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    Env1,
    Env2,
}

impl EnvId {
    pub fn name(&self) -> &'static str {
        match self {
            EnvId::Env1 => "env1",
            EnvId::Env2 => "env2",
        }
    }
}

/// Controller settings shared by both built-in environments.
pub fn default_controller(goal: State, lambda: f64, samples: usize) -> ControllerConfig {
    ControllerConfig {
        mppi: MppiParams {
            samples,
            horizon: 30,
            dt: 0.03,
            lambda,
            noise: NoiseCovariance::new(0.1, 1.0).expect("positive sigmas"),
            bounds: ControlBounds::new(Control::new(0.0, -3.0), Control::new(0.5, 3.0)).expect("ordered bounds"),
            clamp_samples: false,
        },
        costs: CostConfig {
            weights: QuadraticWeights::new([10.0, 10.0, 0.0], [50.0, 50.0, 50.0]).expect("non-negative weights"),
            goal,
            collision_penalty: 1e4,
            control_penalty: ControlPenalty::SampleCoupling { gamma: lambda },
        },
        projection: ProjectionParams::default(),
        clustering: ClusterParams::default(),
    }
}

/// The two obstacle-avoidance benchmarks.
pub fn builtin_environment(id: EnvId) -> Scenario {
    match id {
        EnvId::Env1 => {
            let goal = State::new(2.0, 2.0, FRAC_PI_2);
            Scenario {
                name: id.name().to_string(),
                start: State::new(-1.0, -1.0, FRAC_PI_2),
                goal,
                goal_tol_pos: 0.15,
                goal_tol_theta: 0.25,
                obstacles: alloc::vec![
                    Obstacle::on_route(Point2::new(-1.0, 0.0), Point2::new(0.5, 0.0), 0.53, 0.3, RouteEnd::Stop)
                        .expect("valid obstacle"),
                    Obstacle::fixed(Point2::new(0.0, 1.0), 0.4).expect("valid obstacle"),
                    Obstacle::fixed(Point2::new(1.5, 0.7), 0.5).expect("valid obstacle"),
                ],
                robot_radius: 0.15,
                safety_margin: 0.05,
                max_steps: 1000,
                controller: default_controller(goal, 0.01, 300),
                seed_base: 0,
            }
        }
        EnvId::Env2 => {
            let goal = State::new(1.0, 0.0, 0.0);
            Scenario {
                name: id.name().to_string(),
                start: State::new(-1.0, 0.0, 0.0),
                goal,
                goal_tol_pos: 0.15,
                goal_tol_theta: 0.25,
                obstacles: alloc::vec![Obstacle::fixed(Point2::ZERO, 0.5).expect("valid obstacle")],
                robot_radius: 0.15,
                safety_margin: 0.05,
                max_steps: 1000,
                controller: default_controller(goal, 0.7, 300),
                seed_base: 0,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Reached,
    Collided,
    Timeout,
    /// The controller returned an error; the message is kept for the log.
    ControllerError(String),
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Collided => "collided",
            Outcome::Timeout => "timeout",
            Outcome::ControllerError(_) => "controller_error",
        }
    }
}

/// Per-control-step summary kept in the episode log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub sim_time: f64,
    /// State the controller planned from.
    pub state: State,
    pub applied: Control,
    pub selected_cost: f64,
    pub selected_feasible: bool,
    pub selected_max_violation: f64,
    pub clusters: usize,
    pub noise: usize,
    pub projection_sweeps_max: usize,
    pub projection_converged: usize,
    pub fallback_used: bool,
    pub compute_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub seed: u64,
    pub steps: usize,
    pub path_length: f64,
    /// Executed states, starting at the scenario start.
    pub states: Vec<State>,
    pub applied_controls: Vec<Control>,
    pub records: Vec<StepRecord>,
    pub collision_step: Option<usize>,
}

impl EpisodeResult {
    pub fn compute_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.compute_time_s)
    }

    pub fn feasible_selections(&self) -> usize {
        self.records.iter().filter(|r| r.selected_feasible).count()
    }
}

/// Sum of planar distances between consecutive states.
pub fn path_length(states: &[State]) -> f64 {
    states.windows(2).map(|w| w[0].position().distance(w[1].position())).sum()
}

/// Hook receiving every controller output, e.g. to dump sample traces.
pub trait StepObserver {
    fn on_step(&mut self, record: &StepRecord, output: &StepOutput);
}

impl StepObserver for () {
    fn on_step(&mut self, _: &StepRecord, _: &StepOutput) {}
}

impl<O: StepObserver> StepObserver for Option<O> {
    fn on_step(&mut self, record: &StepRecord, output: &StepOutput) {
        if let Some(o) = self {
            o.on_step(record, output);
        }
    }
}

/// Runs one episode. The seed for control step `i` is `derive_seed(episode_seed, i)`.
pub fn run_episode<C: Clock, O: StepObserver>(
    scenario: &Scenario,
    kind: ControllerKind,
    episode_seed: u64,
    clock: &mut C,
    observer: &mut O,
) -> Result<EpisodeResult> {
    scenario.validate()?;
    let model = scenario.model()?;
    let controller = Controller::new(kind, scenario.controller.clone(), model)?;
    let dt = scenario.dt();

    let mut x = scenario.start;
    let mut nominal = ControlSequence::zeros(scenario.controller.mppi.horizon);
    let mut states = alloc::vec![x];
    let mut applied_controls = Vec::new();
    let mut records = Vec::new();
    let mut collision_step = None;
    let mut outcome = None;

    for step in 0..scenario.max_steps {
        if scenario.at_goal(&x) {
            outcome = Some(Outcome::Reached);
            break;
        }
        let sim_time = step as f64 * dt;
        let constraints = scenario.constraints_at(sim_time)?;
        let started = clock.now();
        let result = controller.step(&x, &nominal, &constraints, derive_seed(episode_seed, step as u64));
        let elapsed = clock.now() - started;
        let output = match result {
            Ok(out) => out,
            Err(e) => {
                outcome = Some(Outcome::ControllerError(e.to_string()));
                break;
            }
        };
        let applied = output.sequence[0];
        let d = &output.diagnostics;
        let record = StepRecord {
            step,
            sim_time,
            state: x,
            applied,
            selected_cost: d.selected_cost,
            selected_feasible: d.selected_feasible,
            selected_max_violation: d.selected_max_violation,
            clusters: d.clusters,
            noise: d.noise,
            projection_sweeps_max: d.projection_sweeps_max,
            projection_converged: d.projection_converged,
            fallback_used: d.fallback_used,
            compute_time_s: elapsed,
        };
        observer.on_step(&record, &output);
        records.push(record);

        x = model.step(&x, &applied);
        states.push(x);
        applied_controls.push(applied);
        nominal = shift_sequence(&output.sequence);

        let obstacles_now = scenario.obstacles_at((step + 1) as f64 * dt);
        if scenario.in_collision(&x, &obstacles_now) {
            collision_step = Some(step + 1);
            outcome = Some(Outcome::Collided);
            break;
        }
    }
    let outcome = outcome.unwrap_or_else(|| {
        if scenario.at_goal(&x) {
            Outcome::Reached
        } else {
            Outcome::Timeout
        }
    });
    Ok(EpisodeResult {
        outcome,
        seed: episode_seed,
        steps: applied_controls.len(),
        path_length: path_length(&states),
        states,
        applied_controls,
        records,
        collision_step,
    })
}

/// Aggregate metrics over a set of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub episodes: usize,
    pub reached: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub controller_errors: usize,
    pub collision_rate: f64,
    /// Over reached episodes only; `None` when none reached the goal.
    pub mean_path_length: Option<f64>,
    /// Per control iteration, over reached episodes only.
    pub mean_compute_time_s: Option<f64>,
    pub max_compute_time_s: Option<f64>,
    /// Fraction of control steps whose selected sequence was feasible, all episodes.
    pub constraint_satisfaction_rate: f64,
    pub control_steps: usize,
    pub infeasible_selections: usize,
}

pub fn summarize(results: &[EpisodeResult]) -> BenchmarkSummary {
    let count = |f: fn(&Outcome) -> bool| results.iter().filter(|r| f(&r.outcome)).count();
    let reached: Vec<&EpisodeResult> = results.iter().filter(|r| r.outcome == Outcome::Reached).collect();
    let collisions = count(|o| *o == Outcome::Collided);

    let mean_path_length = (!reached.is_empty()).then(|| reached.iter().map(|r| r.path_length).sum::<f64>() / reached.len() as f64);
    let times: Vec<f64> = reached.iter().flat_map(|r| r.compute_times()).collect();
    let mean_compute_time_s = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
    let max_compute_time_s = times.iter().copied().reduce(f64::max);

    let control_steps: usize = results.iter().map(|r| r.records.len()).sum();
    let feasible: usize = results.iter().map(|r| r.feasible_selections()).sum();
    BenchmarkSummary {
        episodes: results.len(),
        reached: reached.len(),
        collisions,
        timeouts: count(|o| *o == Outcome::Timeout),
        controller_errors: count(|o| matches!(o, Outcome::ControllerError(_))),
        collision_rate: if results.is_empty() {
            0.0
        } else {
            collisions as f64 / results.len() as f64
        },
        mean_path_length,
        mean_compute_time_s,
        max_compute_time_s,
        constraint_satisfaction_rate: if control_steps == 0 {
            1.0
        } else {
            feasible as f64 / control_steps as f64
        },
        control_steps,
        infeasible_selections: control_steps - feasible,
    }
}

/// Seed of episode `i` in a benchmark.
pub fn episode_seed(seed_base: u64, i: usize) -> u64 {
    seed_base.wrapping_add(i as u64)
}

/// Runs `n_episodes` sequentially with seeds `seed_base + i`.
pub fn run_benchmark<C: Clock>(
    scenario: &Scenario,
    kind: ControllerKind,
    n_episodes: usize,
    seed_base: u64,
    clock: &mut C,
) -> Result<(BenchmarkSummary, Vec<EpisodeResult>)> {
    if n_episodes == 0 {
        return Err(Error::invalid("n_episodes", "must be at least 1"));
    }
    let results = (0..n_episodes)
        .map(|i| run_episode(scenario, kind, episode_seed(seed_base, i), clock, &mut ()))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(&results), results))
}
