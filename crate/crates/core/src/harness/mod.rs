//! Configuration, κ sweeps, identity suites and persisted reports.

pub mod config;
pub mod functionals;
pub mod report;
pub mod runner;

pub use config::SimConfig;
pub use functionals::{first_order_error, remainder_order_error, second_order_error, ErrorPair, Workbench};
pub use report::{CheckRecord, ConvergenceReport, RunReport};
pub use runner::{run, run_sweep, sweep, verify, Experiment, Functional};
