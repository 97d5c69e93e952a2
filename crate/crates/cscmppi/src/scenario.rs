//! TOML scenario files.
//!
//! A file has a `schema_version` and the sections `[scenario]`, `[mppi]`,
//! `[costs]`, `[projection]` and `[clustering]`; obstacles are
//! `[[scenario.obstacles]]` entries. Every key is required unless marked
//! optional below, and unknown keys are rejected. See `README.md` for the
//! full schema.

use std::fmt;
use std::path::{Path, PathBuf};

use cscmppi_core::clustering::{ClusterParams, EpsPolicy, Fallback, Selection};
use cscmppi_core::controller::ControllerConfig;
use cscmppi_core::costs::{ControlPenalty, CostConfig, QuadraticWeights};
use cscmppi_core::dynamics::{Obstacle, Route, RouteEnd};
use cscmppi_core::mppi::MppiParams;
use cscmppi_core::projection::{ProjectionMode, ProjectionParams};
use cscmppi_core::sim::{builtin_environment, EnvId, Scenario};
use cscmppi_core::types::{Control, ControlBounds, NoiseCovariance, Point2, State};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Where a problem was found: the file and, when known, the key and line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: PathBuf,
    pub key: Option<String>,
    pub line: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " ({key})")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed TOML, a missing or unknown key, or a value of the wrong type.
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{location}: unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    Version { location: Location, found: u32 },
    #[error("{location}: {reason}")]
    Invalid { location: Location, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub scenario: ScenarioSection,
    pub mppi: MppiSection,
    pub costs: CostsSection,
    pub projection: ProjectionSection,
    pub clustering: ClusteringSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    /// `[x, y, theta]`
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub goal_tol_pos: f64,
    pub goal_tol_theta: f64,
    pub robot_radius: f64,
    pub safety_margin: f64,
    pub max_steps: usize,
    pub seed_base: u64,
    #[serde(default)]
    pub obstacles: Vec<ObstacleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleEntry {
    pub center: [f64; 2],
    pub radius: f64,
    /// Optional; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    /// Optional straight route starting at `center`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteEntry {
    pub end: [f64; 2],
    pub at_end: RouteEndName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteEndName {
    Stop,
    Continue,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiSection {
    pub samples: usize,
    pub horizon: usize,
    pub dt: f64,
    pub lambda: f64,
    /// Noise standard deviations `[sigma_v, sigma_w]`.
    pub sigma: [f64; 2],
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub clamp_samples: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    /// Diagonal of `Q`.
    pub running: [f64; 3],
    /// Diagonal of `H`.
    pub terminal: [f64; 3],
    pub collision_penalty: f64,
    pub control_penalty: ControlPenaltyEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlPenaltyEntry {
    SampleCoupling { gamma: f64 },
    Quadratic { r: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSection {
    pub mode: ProjectionModeName,
    pub alpha: [f64; 2],
    pub beta_lower: [f64; 2],
    pub beta_upper: [f64; 2],
    pub max_iters: usize,
    pub tol_violation: f64,
    pub tol_stationarity: f64,
    pub clamp_iterates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionModeName {
    PrimalDual,
    ClampOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringSection {
    /// `"adaptive_median"` or `{ fixed = <eps> }`.
    pub eps: EpsEntry,
    pub min_pts: usize,
    /// Optional; defaults to `sqrt(N * m)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_scale: Option<f64>,
    pub fallback: FallbackName,
    pub selection: SelectionName,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsEntry {
    AdaptiveMedian,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackName {
    AllSamples,
    BestSingleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionName {
    Rollout,
    ClusterMinCost,
}

fn state([x, y, theta]: [f64; 3]) -> State {
    State::new(x, y, theta)
}

fn point([x, y]: [f64; 2]) -> Point2 {
    Point2::new(x, y)
}

fn xy(p: Point2) -> [f64; 2] {
    [p.x, p.y]
}

fn xyt(s: &State) -> [f64; 3] {
    [s.x(), s.y(), s.theta()]
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let c = &s.controller;
        let obstacles = s
            .obstacles
            .iter()
            .map(|o| ObstacleEntry {
                center: xy(o.center),
                radius: o.radius,
                velocity: (!o.is_static()).then(|| xy(o.velocity)),
                route: o.route.map(|r| RouteEntry {
                    end: xy(r.end),
                    at_end: match r.at_end {
                        RouteEnd::Stop => RouteEndName::Stop,
                        RouteEnd::Continue => RouteEndName::Continue,
                        RouteEnd::Reverse => RouteEndName::Reverse,
                    },
                }),
            })
            .collect();
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioSection {
                name: s.name.clone(),
                start: xyt(&s.start),
                goal: xyt(&s.goal),
                goal_tol_pos: s.goal_tol_pos,
                goal_tol_theta: s.goal_tol_theta,
                robot_radius: s.robot_radius,
                safety_margin: s.safety_margin,
                max_steps: s.max_steps,
                seed_base: s.seed_base,
                obstacles,
            },
            mppi: MppiSection {
                samples: c.mppi.samples,
                horizon: c.mppi.horizon,
                dt: c.mppi.dt,
                lambda: c.mppi.lambda,
                sigma: c.mppi.noise.sigmas(),
                u_min: c.mppi.bounds.lower().to_array(),
                u_max: c.mppi.bounds.upper().to_array(),
                clamp_samples: c.mppi.clamp_samples,
            },
            costs: CostsSection {
                running: c.costs.weights.running,
                terminal: c.costs.weights.terminal,
                collision_penalty: c.costs.collision_penalty,
                control_penalty: match c.costs.control_penalty {
                    ControlPenalty::SampleCoupling { gamma } => ControlPenaltyEntry::SampleCoupling { gamma },
                    ControlPenalty::Quadratic { r } => ControlPenaltyEntry::Quadratic { r },
                },
            },
            projection: ProjectionSection {
                mode: match c.projection.mode {
                    ProjectionMode::PrimalDual => ProjectionModeName::PrimalDual,
                    ProjectionMode::ClampOnly => ProjectionModeName::ClampOnly,
                },
                alpha: c.projection.alpha,
                beta_lower: c.projection.beta_lower,
                beta_upper: c.projection.beta_upper,
                max_iters: c.projection.max_iters,
                tol_violation: c.projection.tol_violation,
                tol_stationarity: c.projection.tol_stationarity,
                clamp_iterates: c.projection.clamp_iterates,
            },
            clustering: ClusteringSection {
                eps: match c.clustering.eps {
                    EpsPolicy::AdaptiveMedian => EpsEntry::AdaptiveMedian,
                    EpsPolicy::Fixed(eps) => EpsEntry::Fixed(eps),
                },
                min_pts: c.clustering.min_pts,
                cost_scale: c.clustering.cost_scale,
                fallback: match c.clustering.fallback {
                    Fallback::AllSamples => FallbackName::AllSamples,
                    Fallback::BestSingleton => FallbackName::BestSingleton,
                },
                selection: match c.clustering.selection {
                    Selection::Rollout => SelectionName::Rollout,
                    Selection::ClusterMinCost => SelectionName::ClusterMinCost,
                },
            },
        }
    }
}

/// A conversion failure before line lookup: dotted key plus reason.
#[derive(Debug)]
struct KeyError {
    key: String,
    reason: String,
}

fn key_err(key: impl Into<String>, reason: impl fmt::Display) -> KeyError {
    KeyError {
        key: key.into(),
        reason: reason.to_string(),
    }
}

/// File key for a parameter name reported by core validation.
fn key_for(name: &str) -> &'static str {
    match name {
        "start" => "scenario.start",
        "goal" => "scenario.goal",
        "start/goal" => "scenario.start",
        "goal tolerance" => "scenario.goal_tol_pos",
        "robot_radius" => "scenario.robot_radius",
        "safety_margin" => "scenario.safety_margin",
        "inflation" => "scenario.safety_margin",
        "max_steps" => "scenario.max_steps",
        "samples" => "mppi.samples",
        "horizon" => "mppi.horizon",
        "dt" => "mppi.dt",
        "lambda" => "mppi.lambda",
        "noise standard deviation" => "mppi.sigma",
        "control bounds" => "mppi.u_min",
        "cost weights" => "costs.running",
        "collision_penalty" => "costs.collision_penalty",
        "control penalty gamma" | "control penalty R" => "costs.control_penalty",
        "projection step sizes" => "projection.alpha",
        "max_iters" => "projection.max_iters",
        "projection tolerances" => "projection.tol_violation",
        "eps" => "clustering.eps",
        "min_pts" => "clustering.min_pts",
        "cost_scale" => "clustering.cost_scale",
        _ => "scenario",
    }
}

fn core_err(e: cscmppi_core::Error) -> KeyError {
    let name = match &e {
        cscmppi_core::Error::InvalidParameter { name, .. } => name,
        cscmppi_core::Error::NonFinite(name) => name,
        _ => "",
    };
    key_err(key_for(name), e)
}

impl ScenarioFile {
    fn to_scenario(&self) -> Result<Scenario, KeyError> {
        let s = &self.scenario;
        let m = &self.mppi;
        let c = &self.costs;
        let p = &self.projection;
        let k = &self.clustering;

        let mut obstacles = Vec::with_capacity(s.obstacles.len());
        for (i, o) in s.obstacles.iter().enumerate() {
            let velocity = o.velocity.map(point).unwrap_or(Point2::ZERO);
            let mut obs = Obstacle::moving(point(o.center), o.radius, velocity)
                .map_err(|e| key_err(format!("scenario.obstacles[{i}].radius"), e))?;
            if let Some(r) = &o.route {
                let end = point(r.end);
                if velocity.dot(end - obs.center) < 0.0 {
                    return Err(key_err(format!("scenario.obstacles[{i}].velocity"), "must point towards the route end"));
                }
                obs.route = Some(Route {
                    start: obs.center,
                    end,
                    at_end: match r.at_end {
                        RouteEndName::Stop => RouteEnd::Stop,
                        RouteEndName::Continue => RouteEnd::Continue,
                        RouteEndName::Reverse => RouteEnd::Reverse,
                    },
                });
            }
            obstacles.push(obs);
        }

        let noise = NoiseCovariance::new(m.sigma[0], m.sigma[1]).map_err(|e| key_err("mppi.sigma", e))?;
        let bounds = ControlBounds::new(Control::from_array(m.u_min), Control::from_array(m.u_max)).map_err(|e| key_err("mppi.u_max", e))?;
        let weights = QuadraticWeights::new(c.running, c.terminal).map_err(|e| key_err("costs", e))?;
        let goal = state(s.goal);
        let scenario = Scenario {
            name: s.name.clone(),
            start: state(s.start),
            goal,
            goal_tol_pos: s.goal_tol_pos,
            goal_tol_theta: s.goal_tol_theta,
            obstacles,
            robot_radius: s.robot_radius,
            safety_margin: s.safety_margin,
            max_steps: s.max_steps,
            controller: ControllerConfig {
                mppi: MppiParams {
                    samples: m.samples,
                    horizon: m.horizon,
                    dt: m.dt,
                    lambda: m.lambda,
                    noise,
                    bounds,
                    clamp_samples: m.clamp_samples,
                },
                costs: CostConfig {
                    weights,
                    goal,
                    collision_penalty: c.collision_penalty,
                    control_penalty: match c.control_penalty {
                        ControlPenaltyEntry::SampleCoupling { gamma } => ControlPenalty::SampleCoupling { gamma },
                        ControlPenaltyEntry::Quadratic { r } => ControlPenalty::Quadratic { r },
                    },
                },
                projection: ProjectionParams {
                    alpha: p.alpha,
                    beta_lower: p.beta_lower,
                    beta_upper: p.beta_upper,
                    max_iters: p.max_iters,
                    tol_violation: p.tol_violation,
                    tol_stationarity: p.tol_stationarity,
                    mode: match p.mode {
                        ProjectionModeName::PrimalDual => ProjectionMode::PrimalDual,
                        ProjectionModeName::ClampOnly => ProjectionMode::ClampOnly,
                    },
                    clamp_iterates: p.clamp_iterates,
                },
                clustering: ClusterParams {
                    eps: match k.eps {
                        EpsEntry::AdaptiveMedian => EpsPolicy::AdaptiveMedian,
                        EpsEntry::Fixed(eps) => EpsPolicy::Fixed(eps),
                    },
                    min_pts: k.min_pts,
                    cost_scale: k.cost_scale,
                    fallback: match k.fallback {
                        FallbackName::AllSamples => Fallback::AllSamples,
                        FallbackName::BestSingleton => Fallback::BestSingleton,
                    },
                    selection: match k.selection {
                        SelectionName::Rollout => Selection::Rollout,
                        SelectionName::ClusterMinCost => Selection::ClusterMinCost,
                    },
                },
            },
            seed_base: s.seed_base,
        };
        if let Some(i) = scenario.obstacles.iter().position(|o| {
            scenario.start.position().distance(o.center) < o.radius + scenario.inflation()
        }) {
            return Err(key_err("scenario.start", format!("inside inflated obstacle {i}")));
        }
        if let Some(i) = scenario.obstacles.iter().position(|o| {
            o.is_static() && scenario.goal.position().distance(o.center) < o.radius + scenario.inflation()
        }) {
            return Err(key_err("scenario.goal", format!("inside inflated obstacle {i}")));
        }
        scenario.validate().map_err(core_err)?;
        Ok(scenario)
    }
}

/// 1-based line of a dotted key such as `scenario.obstacles[1].radius`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let root = toml::de::DeValue::Table(toml::de::DeTable::parse(text).ok()?.into_inner());
    let mut current = &root;
    let mut span = None;
    for part in key.split('.') {
        let (name, index) = match part.split_once('[') {
            Some((name, rest)) => (name, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (part, None),
        };
        let Some(next) = current.get(name) else { break };
        span = Some(next.span());
        current = next.get_ref();
        if let Some(i) = index {
            let Some(item) = current.get(i) else { break };
            span = Some(item.span());
            current = item.get_ref();
        }
    }
    span.map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Parses scenario text; `path` is only used in diagnostics.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let locate = |key: &str| Location {
        path: path.to_path_buf(),
        key: Some(key.to_string()),
        line: line_of(text, key),
    };
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Version {
            location: locate("schema_version"),
            found: file.schema_version,
        });
    }
    file.to_scenario().map_err(|e| ScenarioError::Invalid {
        location: locate(&e.key),
        reason: e.reason,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

pub fn scenario_to_toml(scenario: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from(scenario)).expect("scenario files always serialise")
}

/// `env1`, `env2`, or a path to a scenario file.
pub fn resolve_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    match source {
        "env1" => Ok(builtin_environment(EnvId::Env1)),
        "env2" => Ok(builtin_environment(EnvId::Env2)),
        path => load_scenario(Path::new(path)),
    }
}
