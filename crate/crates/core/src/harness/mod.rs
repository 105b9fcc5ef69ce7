//! Experiment orchestration: configuration, seeded runs under the shared
//! simulation budget, aggregation and result files.

pub mod config;
pub mod domain;
pub mod output;
pub mod run;

pub use config::{apply_override, AlgorithmConfig, DomainConfig, ExperimentConfig, UtilityApplication};
pub use domain::AnyEnv;
pub use output::{aggregate, aggregate_files, Aggregate};
pub use run::{learning_signal, run_experiment, run_single, seed_schedule, ExperimentOutcome, RunOptions, RunResult};
