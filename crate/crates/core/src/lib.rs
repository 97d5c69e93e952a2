//! Sampling-based model predictive control for planar mobile robots.
//!
//! Two controllers share one sampling pipeline:
//!
//! * standard MPPI, which treats obstacles as a soft cost penalty, and
//! * CSC-MPPI (constrained sampling cluster MPPI), which first pushes every
//!   sampled control sequence into the feasible set with a primal-dual
//!   gradient method, then clusters the samples with DBSCAN over
//!   (perturbation, cost) and keeps the lowest-cost cluster average.
//!
//! The crate is `no_std` and only needs `alloc`. Wall-clock timing is
//! injected through [`sim::Clock`], so the closed-loop simulator also runs
//! without an operating system.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clustering;
pub mod controller;
pub mod costs;
pub mod dynamics;
mod error;
pub mod mppi;
pub mod projection;
pub mod rng;
pub mod sim;
pub mod types;

pub use error::Error;
pub use types::wrap_angle;

pub type Result<T, E = Error> = core::result::Result<T, E>;
