//! JSON-serializable plant configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sensorless_core::actuation::{MotorParams, ScvParams};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuatorConfig {
    pub motor: MotorParams,
    /// Friction on the joint side, as a function of motor velocity over `R`.
    pub friction: ScvParams,
    /// Transmission stiffness, N·m/rad (joint side).
    pub stiffness: f64,
    /// Transmission damping, N·m·s/rad (joint side).
    pub damping: f64,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self {
            motor: MotorParams::default(),
            friction: ScvParams::default(),
            stiffness: 1e4,
            damping: 19.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmission {
    /// Spring-damper between `θ/R` and `s`.
    Elastic,
    /// `θ = R s`; the rotor inertia is reflected onto the joint.
    Rigid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub joint_encoder_bits: u32,
    pub motor_encoder_bits: u32,
    pub quantize: bool,
    /// Additive encoder noise before quantization, rad.
    pub encoder_std: f64,
    pub current_std: f64,
    pub force_std: f64,
    pub torque_std: f64,
    pub accel_std: f64,
    pub gyro_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            joint_encoder_bits: 12,
            motor_encoder_bits: 16,
            quantize: true,
            encoder_std: 0.0,
            current_std: 0.005,
            force_std: 0.5,
            torque_std: 0.02,
            accel_std: 0.02,
            gyro_std: 0.002,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            quantize: false,
            encoder_std: 0.0,
            current_std: 0.0,
            force_std: 0.0,
            torque_std: 0.0,
            accel_std: 0.0,
            gyro_std: 0.0,
            ..Self::default()
        }
    }
}

/// Penalty contact at the four sole corners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    pub stiffness: f64,
    pub damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    pub friction_coefficient: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            stiffness: 1e5,
            damping: 1e3,
            tangential_stiffness: 1e5,
            tangential_damping: 1e3,
            friction_coefficient: 0.8,
        }
    }
}

/// Which model frames carry sensors and contacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    /// Sole frames; each gets four contact corners and an FT sensor.
    pub soles: Vec<String>,
    pub imus: Vec<String>,
    /// Sole rectangle `[length, width]`, m, centered on the sole frame.
    pub foot_size: [f64; 2],
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            soles: crate::humanoid::SOLES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            imus: crate::humanoid::IMUS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            foot_size: [crate::humanoid::FOOT_LENGTH, crate::humanoid::FOOT_WIDTH],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub version: u32,
    /// URDF file; the bundled biped when absent.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub fixed_base: bool,
    pub actuator: ActuatorConfig,
    /// Per-joint replacements of `actuator`.
    #[serde(default)]
    pub overrides: BTreeMap<String, ActuatorConfig>,
    /// Multiplies `F_c`, `F_s` and `k_v` of every joint.
    #[serde(default = "one")]
    pub friction_scale: f64,
    pub transmission: Transmission,
    pub noise: NoiseConfig,
    pub contact: ContactConfig,
    #[serde(default)]
    pub frames: FrameLayout,
    /// Integrator step, s.
    pub dt: f64,
    /// Sensor period, s; must be a multiple of `dt`.
    pub sensor_period: f64,
    /// Vertical sole penetration at start, m.
    #[serde(default)]
    pub initial_preload: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            model_path: None,
            fixed_base: false,
            actuator: ActuatorConfig::default(),
            overrides: BTreeMap::new(),
            friction_scale: 1.0,
            transmission: Transmission::Elastic,
            noise: NoiseConfig::default(),
            contact: ContactConfig::default(),
            frames: FrameLayout::default(),
            dt: 5e-5,
            sensor_period: 1e-3,
            initial_preload: 3.0656e-4,
            seed: 0,
        }
    }
}

impl PlantConfig {
    /// Substeps per sensor sample.
    pub fn substeps(&self) -> usize {
        (self.sensor_period / self.dt).round().max(1.0) as usize
    }

    pub fn actuator_for(&self, joint: &str) -> ActuatorConfig {
        let mut a = self.overrides.get(joint).copied().unwrap_or(self.actuator);
        a.friction = a.friction.scaled(self.friction_scale);
        a
    }
}
