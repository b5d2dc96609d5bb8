//! Low-level PI torque loop and current generation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use sensorless_core::actuation::{current_from_desired_torque, MotorParams};

use crate::ControlError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    /// Proportional gain on the torque error, dimensionless.
    pub kp: f64,
    /// Integral gain, 1/s.
    pub ki: f64,
    /// Bound on `|K_i ∫e|`, N·m.
    pub integral_limit: f64,
    /// Current limit, A.
    pub current_limit: f64,
    /// Joint damping added to the desired torque, N·m·s/rad. It stands in
    /// for the friction damping that compensation removes and keeps the loop
    /// stable when the friction model overestimates.
    #[serde(default)]
    pub joint_damping: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            kp: 0.5,
            ki: 25.0,
            integral_limit: 8.0,
            current_limit: 4.0,
            joint_damping: 2.0,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if [
            self.kp,
            self.ki,
            self.integral_limit,
            self.current_limit,
            self.joint_damping,
        ]
        .iter()
        .any(|g| !(*g >= 0.0) || !g.is_finite())
        {
            return Err(ControlError::Config(
                "PI gains, limits and damping must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiOutput {
    pub currents: DVector<f64>,
    /// Torque the currents are meant to produce before friction compensation.
    pub tau_cmd: DVector<f64>,
    pub saturated: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct TorquePi {
    config: PiConfig,
    motors: Vec<MotorParams>,
    integral: DVector<f64>,
}

impl TorquePi {
    pub fn new(config: PiConfig, motors: Vec<MotorParams>) -> Result<Self, ControlError> {
        config.validate()?;
        let n = motors.len();
        Ok(Self {
            config,
            motors,
            integral: DVector::zeros(n),
        })
    }

    pub fn config(&self) -> &PiConfig {
        &self.config
    }

    /// The integral contribution `K_i ∫e`, N·m.
    pub fn integral_term(&self) -> DVector<f64> {
        &self.integral * self.config.ki
    }

    /// One 1 kHz update. Without `feedback` the loop is pure feedforward.
    pub fn step(
        &mut self,
        tau_d: &DVector<f64>,
        feedback: Option<&DVector<f64>>,
        friction: &DVector<f64>,
        dt: f64,
    ) -> PiOutput {
        let n = self.motors.len();
        let c = self.config;
        let mut tau_cmd = tau_d.clone();
        if let Some(fb) = feedback {
            let bound = if c.ki > 0.0 {
                c.integral_limit / c.ki
            } else {
                0.0
            };
            for k in 0..n {
                let e = tau_d[k] - fb[k];
                self.integral[k] = (self.integral[k] + e * dt).clamp(-bound, bound);
                tau_cmd[k] += c.kp * e + c.ki * self.integral[k];
            }
        }
        let mut currents = DVector::zeros(n);
        let mut saturated = vec![false; n];
        for k in 0..n {
            let i = current_from_desired_torque(&self.motors[k], tau_cmd[k], friction[k]);
            if i.abs() > c.current_limit {
                saturated[k] = true;
            }
            currents[k] = i.clamp(-c.current_limit, c.current_limit);
        }
        PiOutput {
            currents,
            tau_cmd,
            saturated,
        }
    }
}
