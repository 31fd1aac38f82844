//! Experiment configuration, orchestration and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod run;

pub use acceptance::{verify_all, CriterionResult, VerifyOptions, VerifySummary};
pub use config::{EntropySweep, Experiment, ExperimentConfig, SCHEMA_VERSION};
pub use run::{run, write_run, RunRecord};
