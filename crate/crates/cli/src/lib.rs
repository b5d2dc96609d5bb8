//! Batch experiments on the simulated biped: scenario files, closed-loop
//! runs under each control configuration, metrics and report tables.

pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;

use sensorless_control::ControlError;
use sensorless_sim::plant::PlantError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("`{path}`: {message}")]
    Io { path: String, message: String },
    #[error("log schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

impl ExperimentError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
