//! Quadratic tracking costs, the soft collision penalty and the hard obstacle
//! constraint `g` with its gradient.

use alloc::vec::Vec;

use crate::dynamics::{predict_obstacle, Obstacle};
use crate::types::{Control, ControlBounds, NoiseCovariance, State, StateTrajectory};
use crate::{Error, Result};

/// Diagonals of the running (`Q`) and terminal (`H`) weight matrices over `(x, y, θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticWeights {
    pub running: [f64; 3],
    pub terminal: [f64; 3],
}

impl QuadraticWeights {
    pub fn new(running: [f64; 3], terminal: [f64; 3]) -> Result<Self> {
        if running.iter().chain(&terminal).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("cost weights", "must be finite and non-negative"));
        }
        Ok(QuadraticWeights { running, terminal })
    }
}

/// How the per-step control term of the sample cost is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlPenalty {
    /// `γ·u_tᵀ Σ⁻¹ v_t`, coupling the nominal input with the sampled one.
    SampleCoupling { gamma: f64 },
    /// `½ v_tᵀ R v_t` with diagonal `R`.
    Quadratic { r: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub weights: QuadraticWeights,
    pub goal: State,
    /// Added once per trajectory that enters an inflated obstacle (soft mode only).
    pub collision_penalty: f64,
    pub control_penalty: ControlPenalty,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.collision_penalty.is_finite() && self.collision_penalty >= 0.0) {
            return Err(Error::invalid("collision_penalty", "must be non-negative"));
        }
        match self.control_penalty {
            ControlPenalty::SampleCoupling { gamma } if !(gamma.is_finite() && gamma >= 0.0) => {
                return Err(Error::invalid("control penalty gamma", "must be non-negative"));
            }
            ControlPenalty::Quadratic { r } if r.iter().any(|v| !v.is_finite() || *v < 0.0) => {
                return Err(Error::invalid("control penalty R", "must be non-negative"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Obstacles plus the control box. Obstacle discs are grown by `inflation`
/// to account for the robot footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub obstacles: Vec<Obstacle>,
    pub bounds: ControlBounds,
    pub inflation: f64,
}

impl ConstraintSet {
    pub fn new(obstacles: Vec<Obstacle>, bounds: ControlBounds, inflation: f64) -> Result<Self> {
        if !(inflation.is_finite() && inflation >= 0.0) {
            return Err(Error::invalid("inflation", "must be non-negative"));
        }
        Ok(ConstraintSet {
            obstacles,
            bounds,
            inflation,
        })
    }

    /// Obstacles as predicted `t_ahead` seconds from now.
    pub fn obstacles_at(&self, t_ahead: f64) -> impl Iterator<Item = Obstacle> + '_ {
        self.obstacles.iter().map(move |o| predict_obstacle(o, t_ahead))
    }

    /// Largest `g` over every obstacle at one state, `-inf` without obstacles.
    pub fn max_g_at(&self, x: &State, t_ahead: f64) -> f64 {
        self.obstacles_at(t_ahead)
            .map(|o| obstacle_constraint(x, &o, self.inflation))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `g` along `traj[1..]`; state `t` is checked against obstacles
    /// predicted `t·dt` ahead. The initial state is not controllable and is skipped.
    pub fn max_violation(&self, traj: &StateTrajectory, dt: f64) -> f64 {
        traj.iter()
            .enumerate()
            .skip(1)
            .map(|(t, x)| self.max_g_at(x, t as f64 * dt))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest bound excursion over a control sequence.
    pub fn max_bound_violation(&self, seq: &[Control]) -> f64 {
        seq.iter().map(|u| self.bounds.violation(*u)).fold(0.0, f64::max)
    }
}

fn weighted_square(err: [f64; 3], diag: &[f64; 3]) -> f64 {
    err.iter().zip(diag).map(|(e, w)| w * e * e).sum()
}

/// Running cost `(x − x_f)ᵀ Q (x − x_f)`, heading error wrapped.
pub fn running_cost(x: &State, cfg: &CostConfig) -> f64 {
    weighted_square(x.error_to(&cfg.goal), &cfg.weights.running)
}

/// Terminal cost `(x_N − x_f)ᵀ H (x_N − x_f)`, heading error wrapped.
pub fn terminal_cost(x: &State, cfg: &CostConfig) -> f64 {
    weighted_square(x.error_to(&cfg.goal), &cfg.weights.terminal)
}

/// `g(x) = r² − ‖p − c‖²` with `r = radius + inflation`: positive inside.
pub fn obstacle_constraint(x: &State, obs: &Obstacle, inflation: f64) -> f64 {
    let r = obs.radius + inflation;
    let dx = x.x() - obs.center.x;
    let dy = x.y() - obs.center.y;
    r * r - dx * dx - dy * dy
}

/// `∂g/∂(x, y, θ)`.
pub fn obstacle_constraint_gradient(x: &State, obs: &Obstacle, _inflation: f64) -> [f64; 3] {
    [-2.0 * (x.x() - obs.center.x), -2.0 * (x.y() - obs.center.y), 0.0]
}

/// `collision_penalty` if any state of `traj` is inside an inflated obstacle.
pub fn soft_collision_penalty(traj: &StateTrajectory, constraints: &ConstraintSet, cfg: &CostConfig, dt: f64) -> f64 {
    let hit = traj
        .iter()
        .enumerate()
        .any(|(t, x)| constraints.max_g_at(x, t as f64 * dt) > 0.0);
    if hit {
        cfg.collision_penalty
    } else {
        0.0
    }
}

/// Everything needed to score a sampled trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryCost<'a> {
    pub cfg: &'a CostConfig,
    pub cov: &'a NoiseCovariance,
    pub constraints: &'a ConstraintSet,
    pub dt: f64,
    /// Add the collision penalty (standard MPPI). Off for hard-constraint mode.
    pub soft_constraints: bool,
}

impl TrajectoryCost<'_> {
    fn control_term(&self, nominal: Control, sampled: Control) -> f64 {
        match self.cfg.control_penalty {
            ControlPenalty::SampleCoupling { gamma } => {
                let p = self.cov.precision_times(nominal);
                gamma * (p.v * sampled.v + p.w * sampled.w)
            }
            ControlPenalty::Quadratic { r } => 0.5 * (r[0] * sampled.v * sampled.v + r[1] * sampled.w * sampled.w),
        }
    }

    /// `S = Σ_t [l(x_t) + control term] + φ(x_N)`, plus the soft penalty when enabled.
    pub fn evaluate(&self, traj: &StateTrajectory, nominal: &[Control], sampled: &[Control]) -> f64 {
        debug_assert_eq!(traj.len(), sampled.len() + 1);
        debug_assert_eq!(nominal.len(), sampled.len());
        let mut s = 0.0;
        for (t, (u, v)) in nominal.iter().zip(sampled).enumerate() {
            s += running_cost(&traj[t], self.cfg) + self.control_term(*u, *v);
        }
        if let Some(x_n) = traj.terminal() {
            s += terminal_cost(x_n, self.cfg);
        }
        if self.soft_constraints {
            s += soft_collision_penalty(traj, self.constraints, self.cfg, self.dt);
        }
        s
    }
}

/// Free-function form of [`TrajectoryCost::evaluate`].
#[allow(clippy::too_many_arguments)]
pub fn trajectory_cost(
    traj: &StateTrajectory,
    nominal: &[Control],
    sampled: &[Control],
    cfg: &CostConfig,
    cov: &NoiseCovariance,
    soft_constraints: bool,
    constraints: &ConstraintSet,
    dt: f64,
) -> f64 {
    TrajectoryCost {
        cfg,
        cov,
        constraints,
        dt,
        soft_constraints,
    }
    .evaluate(traj, nominal, sampled)
}
