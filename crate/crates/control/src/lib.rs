//! Balancing cascade for a torque-controlled biped: a 100 Hz force-distribution
//! balancer producing desired joint torques, a 1 kHz PI torque loop with
//! optional friction compensation, and the joint-torque feedback sources it
//! can close the loop on.

pub mod artifacts;
pub mod balancer;
pub mod controller;
pub mod estimation;
pub mod feedback;
pub mod mode;
pub mod pi;
pub mod position;

use sensorless_core::pinn::PinnError;
use sensorless_core::rbd::RbdError;
use sensorless_core::ukf::UkfError;
use sensorless_core::velocity_kf::KfError;
use sensorless_sim::plant::PlantError;

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("unknown frame `{0}`")]
    Frame(String),
    #[error("invalid control configuration: {0}")]
    Config(String),
    #[error("balancer inactive: no foot in contact at t = {t:.3} s")]
    Inactive { t: f64 },
    #[error("rate contract violated: {0}")]
    Schedule(String),
    #[error(transparent)]
    Kf(#[from] KfError),
    #[error(transparent)]
    Ukf(#[from] UkfError),
    #[error(transparent)]
    Model(#[from] RbdError),
    #[error(transparent)]
    Pinn(#[from] PinnError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("artifact `{path}`: {message}")]
    Artifact { path: String, message: String },
}
