//! Value types shared by every stage of the controller.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
use core::ops::{Add, Deref, DerefMut, Mul, Sub};

use crate::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

// fmod is exact, so large multiples of TAU come back without drift.
pub(crate) fn wrap(a: f64) -> f64 {
    let mut r = libm::fmod(a, TAU);
    if r > PI {
        r -= TAU;
    } else if r <= -PI {
        r += TAU;
    }
    r
}

/// A point or displacement in the plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Planar robot pose. The heading is always kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    x: f64,
    y: f64,
    theta: f64,
}

impl State {
    /// Builds a pose, wrapping `theta`. Inputs are assumed finite; use
    /// [`State::try_new`] for untrusted values.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        State {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn try_new(x: f64, y: f64, theta: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite("state position"));
        }
        Ok(State {
            x,
            y,
            theta: wrap_angle(theta)?,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = wrap(theta);
    }

    /// Component-wise error `self - reference` with the heading difference wrapped.
    pub fn error_to(&self, reference: &State) -> [f64; 3] {
        [
            self.x - reference.x,
            self.y - reference.y,
            wrap(self.theta - reference.theta),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Differential-drive command: linear velocity `v` (m/s), angular velocity `w` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    pub v: f64,
    pub w: f64,
}

impl Control {
    pub const ZERO: Control = Control { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Control { v, w }
    }

    pub fn from_array([v, w]: [f64; 2]) -> Self {
        Control { v, w }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.v, self.w]
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }
}

impl Add for Control {
    type Output = Control;
    fn add(self, rhs: Control) -> Control {
        Control::new(self.v + rhs.v, self.w + rhs.w)
    }
}

impl Sub for Control {
    type Output = Control;
    fn sub(self, rhs: Control) -> Control {
        Control::new(self.v - rhs.v, self.w - rhs.w)
    }
}

impl Mul<f64> for Control {
    type Output = Control;
    fn mul(self, s: f64) -> Control {
        Control::new(self.v * s, self.w * s)
    }
}

/// Element-wise box on the control input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    lower: Control,
    upper: Control,
}

impl ControlBounds {
    pub fn new(lower: Control, upper: Control) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::NonFinite("control bounds"));
        }
        if lower.v > upper.v || lower.w > upper.w {
            return Err(Error::invalid("control bounds", "lower exceeds upper"));
        }
        Ok(ControlBounds { lower, upper })
    }

    pub fn lower(&self) -> Control {
        self.lower
    }

    pub fn upper(&self) -> Control {
        self.upper
    }

    pub fn clamp(&self, u: Control) -> Control {
        Control::new(
            u.v.clamp(self.lower.v, self.upper.v),
            u.w.clamp(self.lower.w, self.upper.w),
        )
    }

    /// Largest amount by which `u` leaves the box; zero when inside.
    pub fn violation(&self, u: Control) -> f64 {
        let lo = (self.lower.v - u.v).max(self.lower.w - u.w);
        let hi = (u.v - self.upper.v).max(u.w - self.upper.w);
        lo.max(hi).max(0.0)
    }

    pub fn contains(&self, u: Control, tol: f64) -> bool {
        self.violation(u) <= tol
    }
}

/// Control plan over the horizon: `N` inputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlSequence(Vec<Control>);

impl ControlSequence {
    pub fn new(inputs: Vec<Control>) -> Self {
        ControlSequence(inputs)
    }

    pub fn zeros(horizon: usize) -> Self {
        ControlSequence(alloc::vec![Control::ZERO; horizon])
    }

    pub fn constant(u: Control, horizon: usize) -> Self {
        ControlSequence(alloc::vec![u; horizon])
    }

    pub fn into_inner(self) -> Vec<Control> {
        self.0
    }

    /// Errors unless the sequence holds exactly `horizon` inputs.
    pub fn expect_len(&self, horizon: usize) -> Result<()> {
        if self.0.len() == horizon {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: horizon,
                found: self.0.len(),
            })
        }
    }
}

impl Deref for ControlSequence {
    type Target = [Control];
    fn deref(&self) -> &[Control] {
        &self.0
    }
}

impl DerefMut for ControlSequence {
    fn deref_mut(&mut self) -> &mut [Control] {
        &mut self.0
    }
}

impl FromIterator<Control> for ControlSequence {
    fn from_iter<I: IntoIterator<Item = Control>>(iter: I) -> Self {
        ControlSequence(iter.into_iter().collect())
    }
}

/// States visited by a rollout: `N + 1` poses starting at the initial state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTrajectory(Vec<State>);

impl StateTrajectory {
    pub fn new(states: Vec<State>) -> Self {
        StateTrajectory(states)
    }

    pub fn into_inner(self) -> Vec<State> {
        self.0
    }

    pub(crate) fn states_mut(&mut self) -> &mut [State] {
        &mut self.0
    }

    pub fn initial(&self) -> Option<&State> {
        self.0.first()
    }

    pub fn terminal(&self) -> Option<&State> {
        self.0.last()
    }
}

impl Deref for StateTrajectory {
    type Target = [State];
    fn deref(&self) -> &[State] {
        &self.0
    }
}

/// Diagonal Gaussian exploration noise, given as standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCovariance {
    sigma_v: f64,
    sigma_w: f64,
}

impl NoiseCovariance {
    pub fn new(sigma_v: f64, sigma_w: f64) -> Result<Self> {
        if !(sigma_v.is_finite() && sigma_w.is_finite()) {
            return Err(Error::NonFinite("noise standard deviation"));
        }
        if sigma_v <= 0.0 || sigma_w <= 0.0 {
            return Err(Error::invalid("noise standard deviation", "must be positive"));
        }
        Ok(NoiseCovariance { sigma_v, sigma_w })
    }

    pub fn sigma_v(&self) -> f64 {
        self.sigma_v
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn sigmas(&self) -> [f64; 2] {
        [self.sigma_v, self.sigma_w]
    }

    /// `Σ⁻¹` applied to a control, element-wise.
    pub fn precision_times(&self, u: Control) -> Control {
        Control::new(
            u.v / (self.sigma_v * self.sigma_v),
            u.w / (self.sigma_w * self.sigma_w),
        )
    }
}
