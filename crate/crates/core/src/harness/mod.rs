//! Configuration, seeding and the experiment driver behind the CLI.

pub mod config;
pub mod experiment;
pub mod seed;

pub use config::RunConfig;
pub use experiment::{compare_schedules, run_experiment, ExperimentOutcome, Instance};
