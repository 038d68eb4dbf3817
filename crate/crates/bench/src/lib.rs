//! Configuration-driven benchmark harness for the decentralized solvers.
//!
//! [`config`] parses experiment files, [`runner`] executes the replicate grid
//! and serializes result rows, and [`table`] turns a result CSV into an
//! aligned comparison table.

pub mod config;
pub mod runner;
pub mod table;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{parse_csv, run_experiment, to_csv, ResultRow, RunOptions};
