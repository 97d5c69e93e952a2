//! Robot kinematics and obstacle motion.

use alloc::vec::Vec;

use crate::types::{Control, Point2, State, StateTrajectory};
use crate::{Error, Result};

/// `∂(next state)/∂(v, w)`, row per state component.
pub type ControlJacobian = [[f64; 2]; 3];

/// One-step transition model used by rollouts and the projection.
pub trait Dynamics {
    fn dt(&self) -> f64;

    fn step(&self, x: &State, u: &Control) -> State;

    /// Sensitivity of [`Dynamics::step`] to the control, holding `x` fixed.
    fn control_jacobian(&self, x: &State, u: &Control) -> ControlJacobian;
}

/// Unicycle kinematics of a differential-drive base, forward Euler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffDrive {
    dt: f64,
}

impl DiffDrive {
    pub fn new(dt: f64) -> Result<Self> {
        if !dt.is_finite() {
            return Err(Error::NonFinite("dt"));
        }
        if dt <= 0.0 {
            return Err(Error::invalid("dt", "must be positive"));
        }
        Ok(DiffDrive { dt })
    }
}

impl Dynamics for DiffDrive {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, x: &State, u: &Control) -> State {
        let (s, c) = libm::sincos(x.theta());
        State::new(
            x.x() + u.v * c * self.dt,
            x.y() + u.v * s * self.dt,
            x.theta() + u.w * self.dt,
        )
    }

    fn control_jacobian(&self, x: &State, _u: &Control) -> ControlJacobian {
        let (s, c) = libm::sincos(x.theta());
        [[c * self.dt, 0.0], [s * self.dt, 0.0], [0.0, self.dt]]
    }
}

/// Simulates `seq` from `x0`. The result has `seq.len() + 1` states.
pub fn rollout<D: Dynamics + ?Sized>(model: &D, x0: &State, seq: &[Control]) -> StateTrajectory {
    let mut states = Vec::with_capacity(seq.len() + 1);
    states.push(*x0);
    let mut x = *x0;
    for u in seq {
        x = model.step(&x, u);
        states.push(x);
    }
    StateTrajectory::new(states)
}

/// What a moving obstacle does once it reaches the end of its route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteEnd {
    #[default]
    Stop,
    Continue,
    /// Shuttle back and forth between the route's start and end.
    Reverse,
}

/// A straight segment travelled at the obstacle's speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub start: Point2,
    pub end: Point2,
    pub at_end: RouteEnd,
}

/// Circular obstacle, optionally moving at constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Point2,
    pub radius: f64,
    pub velocity: Point2,
    pub route: Option<Route>,
}

impl Obstacle {
    pub fn fixed(center: Point2, radius: f64) -> Result<Self> {
        Self::moving(center, radius, Point2::ZERO)
    }

    pub fn moving(center: Point2, radius: f64, velocity: Point2) -> Result<Self> {
        if !(center.is_finite() && velocity.is_finite() && radius.is_finite()) {
            return Err(Error::NonFinite("obstacle"));
        }
        if radius <= 0.0 {
            return Err(Error::invalid("obstacle radius", "must be positive"));
        }
        Ok(Obstacle {
            center,
            radius,
            velocity,
            route: None,
        })
    }

    /// Obstacle travelling from `start` towards `end` at `speed`.
    pub fn on_route(start: Point2, end: Point2, speed: f64, radius: f64, at_end: RouteEnd) -> Result<Self> {
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(Error::invalid("obstacle speed", "must be finite and non-negative"));
        }
        let length = end.distance(start);
        let velocity = if length > 0.0 {
            (end - start) * (speed / length)
        } else {
            Point2::ZERO
        };
        let mut obs = Self::moving(start, radius, velocity)?;
        obs.route = Some(Route { start, end, at_end });
        Ok(obs)
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn is_static(&self) -> bool {
        self.velocity == Point2::ZERO
    }
}

/// Position of `obs` after `t_ahead` seconds of constant-speed travel.
///
/// Routed obstacles honour their end behaviour, so predictions from any
/// intermediate state agree with the true motion.
pub fn predict_obstacle(obs: &Obstacle, t_ahead: f64) -> Obstacle {
    if t_ahead <= 0.0 || obs.is_static() {
        return *obs;
    }
    let route = match obs.route {
        None | Some(Route { at_end: RouteEnd::Continue, .. }) => {
            return Obstacle {
                center: obs.center + obs.velocity * t_ahead,
                ..*obs
            };
        }
        Some(route) => route,
    };
    let speed = obs.speed();
    let travel = speed * t_ahead;
    let heading_to_end = obs.velocity.dot(route.end - route.start) >= 0.0;
    let target = if heading_to_end { route.end } else { route.start };
    let remaining = target.distance(obs.center);
    if travel < remaining {
        return Obstacle {
            center: obs.center + obs.velocity * t_ahead,
            ..*obs
        };
    }
    match route.at_end {
        RouteEnd::Stop | RouteEnd::Continue => Obstacle {
            center: target,
            velocity: Point2::ZERO,
            ..*obs
        },
        RouteEnd::Reverse => {
            let length = route.end.distance(route.start);
            if length == 0.0 {
                return Obstacle { center: target, ..*obs };
            }
            // unfold the remaining travel onto a triangle wave of period 2L
            let leftover = libm::fmod(travel - remaining, 2.0 * length);
            let (from, to) = (target, if heading_to_end { route.start } else { route.end });
            let unit = (to - from) * (1.0 / length);
            let (center, dir) = if leftover <= length {
                (from + unit * leftover, unit)
            } else {
                (to - unit * (leftover - length), unit * -1.0)
            };
            Obstacle {
                center,
                velocity: dir * speed,
                ..*obs
            }
        }
    }
}
