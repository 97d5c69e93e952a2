//! Moves sampled control sequences into the feasible set.
//!
//! Each sample is treated on its own. Within a sweep the horizon is visited in
//! order; at step `t` the bound multipliers take a projected ascent step, the
//! input `v_t` takes a descent step on the Lagrangian
//!
//! ```text
//! L_t = g(x_{t+1})·1[g(X) > 0] + μ̲_tᵀ(v̲ − v_t) + μ̄_tᵀ(v_t − v̄)
//! ```
//!
//! and `x_{t+1}` is re-simulated before moving on. The indicator looks at the
//! whole current rollout `X`: an obstacle penetrated anywhere along it pushes
//! on every step. Sweeps repeat until the KKT conditions hold to tolerance or
//! the sweep budget runs out.

use alloc::vec::Vec;

use crate::costs::{obstacle_constraint, obstacle_constraint_gradient, ConstraintSet};
use crate::dynamics::{rollout, Dynamics, Obstacle};
use crate::mppi::SampleBatch;
use crate::types::{Control, ControlBounds, ControlSequence, State, StateTrajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    #[default]
    PrimalDual,
    /// Clamp inputs to the control box only; obstacles are left alone.
    ClampOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    /// Primal step per input channel `(v, w)`.
    pub alpha: [f64; 2],
    /// Dual step for the lower-bound multipliers.
    pub beta_lower: [f64; 2],
    /// Dual step for the upper-bound multipliers.
    pub beta_upper: [f64; 2],
    /// Sweep budget.
    pub max_iters: usize,
    /// Allowed `g` (m²) and bound excursion at termination.
    pub tol_violation: f64,
    /// Allowed Lagrangian gradient norm and complementarity residual at termination.
    pub tol_stationarity: f64,
    pub mode: ProjectionMode,
    /// Clamp every primal iterate onto the control box. Without it the fixed-step
    /// iteration tends to cycle around an active bound.
    pub clamp_iterates: bool,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            alpha: [1.0, 0.2],
            beta_lower: [1.0, 1.0],
            beta_upper: [1.0, 1.0],
            max_iters: 50,
            tol_violation: 1e-3,
            tol_stationarity: 1e-3,
            mode: ProjectionMode::PrimalDual,
            clamp_iterates: true,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self) -> Result<()> {
        let steps = self.alpha.iter().chain(&self.beta_lower).chain(&self.beta_upper);
        if steps.clone().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("projection step sizes", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.tol_violation > 0.0 && self.tol_stationarity > 0.0) {
            return Err(Error::invalid("projection tolerances", "must be positive"));
        }
        Ok(())
    }
}

/// Bound multipliers of one horizon step, per input channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDuals {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl StepDuals {
    pub fn is_non_negative(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|m| *m >= 0.0)
    }
}

/// Multipliers for the whole horizon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualState {
    pub steps: Vec<StepDuals>,
}

impl DualState {
    pub fn zeros(horizon: usize) -> Self {
        DualState {
            steps: alloc::vec![StepDuals::default(); horizon],
        }
    }
}

/// Marks each obstacle whose `g` is positive somewhere along `traj[1..]`.
pub fn active_obstacles(traj: &StateTrajectory, constraints: &ConstraintSet, dt: f64) -> Vec<bool> {
    let mut active = alloc::vec![false; constraints.obstacles.len()];
    for (t, x) in traj.iter().enumerate().skip(1) {
        for (a, obs) in active.iter_mut().zip(constraints.obstacles_at(t as f64 * dt)) {
            *a |= obstacle_constraint(x, &obs, constraints.inflation) > 0.0;
        }
    }
    active
}

/// `∇_v L_t`. Every obstacle flagged in `active` contributes
/// `∂g/∂x(x_{t+1}) · ∂f/∂v`, with `x_{t+1}` checked against the obstacle
/// predicted `t_next` seconds ahead; the multipliers add `μ̄ − μ̲`.
pub fn lagrangian_gradient<D: Dynamics + ?Sized>(
    x_t: &State,
    v_t: &Control,
    duals: &StepDuals,
    constraints: &ConstraintSet,
    active: &[bool],
    model: &D,
    t_next: f64,
) -> [f64; 2] {
    let next: Vec<Obstacle> = constraints.obstacles_at(t_next).collect();
    gradient_at(x_t, v_t, duals, &next, active, constraints.inflation, model)
}

fn gradient_at<D: Dynamics + ?Sized>(
    x_t: &State,
    v_t: &Control,
    duals: &StepDuals,
    obstacles: &[Obstacle],
    active: &[bool],
    inflation: f64,
    model: &D,
) -> [f64; 2] {
    let mut grad = [
        duals.upper[0] - duals.lower[0],
        duals.upper[1] - duals.lower[1],
    ];
    if !active.iter().any(|a| *a) {
        return grad;
    }
    let x_next = model.step(x_t, v_t);
    let j = model.control_jacobian(x_t, v_t);
    for (obs, _) in obstacles.iter().zip(active).filter(|(_, a)| **a) {
        let dg = obstacle_constraint_gradient(&x_next, obs, inflation);
        for (col, g) in grad.iter_mut().enumerate() {
            *g += dg[0] * j[0][col] + dg[1] * j[1][col] + dg[2] * j[2][col];
        }
    }
    grad
}

/// Obstacle predictions for every rollout index, shared by all samples of a batch.
#[derive(Debug, Clone)]
pub struct HorizonObstacles {
    /// `steps[s]` holds the obstacles predicted `s·dt` ahead.
    steps: Vec<Vec<Obstacle>>,
    inflation: f64,
}

impl HorizonObstacles {
    pub fn new(constraints: &ConstraintSet, horizon: usize, dt: f64) -> Self {
        HorizonObstacles {
            steps: (0..=horizon).map(|s| constraints.obstacles_at(s as f64 * dt).collect()).collect(),
            inflation: constraints.inflation,
        }
    }

    fn g(&self, s: usize, x: &State) -> impl Iterator<Item = f64> + '_ {
        let x = *x;
        self.steps[s].iter().map(move |o| obstacle_constraint(&x, o, self.inflation))
    }
}

/// Per-obstacle count of rollout states with `g > 0`, kept in step with the
/// rollout as individual states are replaced.
struct Violations {
    inside: Vec<bool>,
    counts: Vec<usize>,
    width: usize,
}

impl Violations {
    fn new(traj: &StateTrajectory, horizon: &HorizonObstacles) -> Self {
        let width = horizon.steps.first().map_or(0, Vec::len);
        let mut v = Violations {
            inside: alloc::vec![false; traj.len() * width],
            counts: alloc::vec![0; width],
            width,
        };
        for (s, x) in traj.iter().enumerate().skip(1) {
            v.update(s, x, horizon);
        }
        v
    }

    fn update(&mut self, s: usize, x: &State, horizon: &HorizonObstacles) {
        for (j, g) in horizon.g(s, x).enumerate() {
            let slot = &mut self.inside[s * self.width + j];
            let now = g > 0.0;
            if now != *slot {
                if now {
                    self.counts[j] += 1;
                } else {
                    self.counts[j] -= 1;
                }
                *slot = now;
            }
        }
    }

    fn active(&self, out: &mut [bool]) {
        for (a, c) in out.iter_mut().zip(&self.counts) {
            *a = *c > 0;
        }
    }
}

/// Projected ascent on the bound multipliers.
pub fn dual_update(duals: &StepDuals, v_t: &Control, bounds: &ControlBounds, beta_lower: [f64; 2], beta_upper: [f64; 2]) -> StepDuals {
    let v = v_t.to_array();
    let lo = bounds.lower().to_array();
    let hi = bounds.upper().to_array();
    let mut out = StepDuals::default();
    for i in 0..2 {
        out.lower[i] = (duals.lower[i] + beta_lower[i] * (lo[i] - v[i])).max(0.0);
        out.upper[i] = (duals.upper[i] + beta_upper[i] * (v[i] - hi[i])).max(0.0);
    }
    out
}

/// Element-wise descent step `v − α ∘ ∇`.
pub fn primal_update(v_t: &Control, grad: [f64; 2], alpha: [f64; 2]) -> Control {
    Control::new(v_t.v - alpha[0] * grad[0], v_t.w - alpha[1] * grad[1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionReport {
    pub mode: ProjectionMode,
    /// Sweeps executed (1 for clamping).
    pub sweeps: usize,
    pub converged: bool,
    /// Largest `g` along the projected rollout (`-inf` without obstacles).
    pub max_violation: f64,
    pub max_bound_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    pub sequence: ControlSequence,
    pub rollout: StateTrajectory,
    pub report: ProjectionReport,
}

#[allow(clippy::too_many_arguments)]
fn kkt_satisfied<D: Dynamics + ?Sized>(
    seq: &ControlSequence,
    traj: &StateTrajectory,
    duals: &DualState,
    bounds: &ControlBounds,
    horizon: &HorizonObstacles,
    active: &[bool],
    model: &D,
    params: &ProjectionParams,
) -> bool {
    let lo = bounds.lower().to_array();
    let hi = bounds.upper().to_array();
    for (t, (v, mu)) in seq.iter().zip(&duals.steps).enumerate() {
        if horizon.g(t + 1, &traj[t + 1]).any(|g| g > params.tol_violation) {
            return false;
        }
        if bounds.violation(*v) > params.tol_violation {
            return false;
        }
        let g = gradient_at(&traj[t], v, mu, &horizon.steps[t + 1], active, horizon.inflation, model);
        if libm::hypot(g[0], g[1]) > params.tol_stationarity {
            return false;
        }
        let va = v.to_array();
        for i in 0..2 {
            let slack = (mu.lower[i] * (lo[i] - va[i])).abs().max((mu.upper[i] * (va[i] - hi[i])).abs());
            if slack > params.tol_stationarity {
                return false;
            }
        }
    }
    true
}

/// Projects one sampled sequence. Non-convergence is reported, not an error.
pub fn project_sample<D: Dynamics + ?Sized>(
    x0: &State,
    v_seq: &ControlSequence,
    constraints: &ConstraintSet,
    model: &D,
    params: &ProjectionParams,
) -> ProjectedSample {
    let horizon = HorizonObstacles::new(constraints, v_seq.len(), model.dt());
    project_with(x0, v_seq, constraints, &horizon, model, params)
}

fn clamped(seq: &mut ControlSequence, bounds: &ControlBounds) {
    for v in seq.iter_mut() {
        *v = bounds.clamp(*v);
    }
}

/// As [`project_sample`], with obstacle predictions computed once by the caller.
pub fn project_with<D: Dynamics + ?Sized>(
    x0: &State,
    v_seq: &ControlSequence,
    constraints: &ConstraintSet,
    horizon: &HorizonObstacles,
    model: &D,
    params: &ProjectionParams,
) -> ProjectedSample {
    let dt = model.dt();
    let bounds = &constraints.bounds;
    let mut seq = v_seq.clone();
    if params.mode == ProjectionMode::ClampOnly {
        clamped(&mut seq, bounds);
        let traj = rollout(model, x0, &seq);
        let max_violation = constraints.max_violation(&traj, dt);
        return ProjectedSample {
            report: ProjectionReport {
                mode: ProjectionMode::ClampOnly,
                sweeps: 1,
                converged: true,
                max_violation,
                max_bound_violation: 0.0,
            },
            sequence: seq,
            rollout: traj,
        };
    }

    if params.clamp_iterates {
        clamped(&mut seq, bounds);
    }
    let mut traj = rollout(model, x0, &seq);
    let mut duals = DualState::zeros(seq.len());
    let mut violations = Violations::new(&traj, horizon);
    let mut active = alloc::vec![false; violations.width];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < params.max_iters {
        sweeps += 1;
        for t in 0..seq.len() {
            let mu = dual_update(&duals.steps[t], &seq[t], bounds, params.beta_lower, params.beta_upper);
            duals.steps[t] = mu;
            violations.active(&mut active);
            let grad = gradient_at(&traj[t], &seq[t], &mu, &horizon.steps[t + 1], &active, horizon.inflation, model);
            seq[t] = primal_update(&seq[t], grad, params.alpha);
            if params.clamp_iterates {
                seq[t] = bounds.clamp(seq[t]);
            }
            let next = model.step(&traj[t], &seq[t]);
            traj.states_mut()[t + 1] = next;
            violations.update(t + 1, &next, horizon);
        }
        violations.active(&mut active);
        if kkt_satisfied(&seq, &traj, &duals, bounds, horizon, &active, model, params) {
            converged = true;
            break;
        }
    }
    let report = ProjectionReport {
        mode: ProjectionMode::PrimalDual,
        sweeps,
        converged,
        max_violation: constraints.max_violation(&traj, dt),
        max_bound_violation: constraints.max_bound_violation(&seq),
    };
    ProjectedSample {
        sequence: seq,
        rollout: traj,
        report,
    }
}

/// Projects every sample of `batch` in place, then rewrites its perturbation
/// as `δu_t = v_t − u_t` and its rollout.
pub fn project_batch<D: Dynamics + ?Sized>(
    batch: &mut SampleBatch,
    nominal: &ControlSequence,
    x0: &State,
    constraints: &ConstraintSet,
    model: &D,
    params: &ProjectionParams,
) -> Vec<ProjectionReport> {
    let horizon = HorizonObstacles::new(constraints, nominal.len(), model.dt());
    let mut reports = Vec::with_capacity(batch.len());
    for k in 0..batch.len() {
        let projected = project_with(x0, &batch.sequences[k], constraints, &horizon, model, params);
        batch.sequences[k] = projected.sequence;
        batch.rollouts[k] = projected.rollout;
        batch.refresh_perturbation(k, nominal);
        reports.push(projected.report);
    }
    reports
}
