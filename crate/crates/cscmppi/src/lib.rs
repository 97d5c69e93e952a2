//! Scenario files, parallel benchmarks, structured logs and the command-line
//! front end for the controllers in `cscmppi-core`.

pub mod bench;
pub mod cli;
pub mod output;
pub mod scenario;

pub use cscmppi_core as core;
