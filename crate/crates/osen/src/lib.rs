//! Experiment runner, dataset ingestion and report emission for
//! operational support estimator networks. The numerical work lives in
//! `osen-core`.

pub mod config;
pub mod data;
pub mod error;
pub mod pipelines;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{OsenError, Result};
pub use pipelines::run_experiment;
pub use report::{emit_report, Report, RunResult};
