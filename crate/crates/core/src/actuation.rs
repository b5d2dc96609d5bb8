//! Motor/gearbox torque balance and Stribeck-Coulomb-Viscous friction.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ActuationError {
    #[error("invalid motor parameters: {0}")]
    Motor(String),
    #[error("invalid friction parameters: {0}")]
    Friction(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Torque constant, N·m/A.
    pub k_t: f64,
    /// Gear reduction ratio.
    pub ratio: f64,
    /// Motor-shaft inertia, kg·m².
    pub j_m: f64,
}

impl MotorParams {
    pub fn new(k_t: f64, ratio: f64, j_m: f64) -> Result<Self, ActuationError> {
        let p = Self { k_t, ratio, j_m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ActuationError> {
        if !(self.k_t > 0.0 && self.k_t.is_finite()) {
            return Err(ActuationError::Motor(format!(
                "k_t must be positive, got {}",
                self.k_t
            )));
        }
        if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
            return Err(ActuationError::Motor(format!(
                "ratio must be >= 1, got {}",
                self.ratio
            )));
        }
        if !(self.j_m >= 0.0 && self.j_m.is_finite()) {
            return Err(ActuationError::Motor(format!(
                "J_m must be >= 0, got {}",
                self.j_m
            )));
        }
        Ok(())
    }

    /// Current-to-torque gain at the joint side, `R k_t`.
    pub fn gain(&self) -> f64 {
        self.ratio * self.k_t
    }

    /// Motor-shaft inertia reflected to the joint, `R² J_m`.
    pub fn reflected_inertia(&self) -> f64 {
        self.ratio * self.ratio * self.j_m
    }
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            k_t: 0.1,
            ratio: 100.0,
            j_m: 3e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScvParams {
    /// Coulomb level, N·m.
    pub f_c: f64,
    /// Static (breakaway) level, N·m.
    pub f_s: f64,
    /// Stribeck velocity, rad/s.
    pub v_s: f64,
    /// Viscous coefficient, N·m·s/rad.
    pub k_v: f64,
}

impl ScvParams {
    pub fn new(f_c: f64, f_s: f64, v_s: f64, k_v: f64) -> Result<Self, ActuationError> {
        let p = Self { f_c, f_s, v_s, k_v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ActuationError> {
        let finite = [self.f_c, self.f_s, self.v_s, self.k_v]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.f_c < 0.0 || self.f_s < self.f_c {
            return Err(ActuationError::Friction(format!(
                "need F_s >= F_c >= 0, got F_c={} F_s={}",
                self.f_c, self.f_s
            )));
        }
        if !(self.v_s > 0.0) {
            return Err(ActuationError::Friction(format!(
                "v_s must be positive, got {}",
                self.v_s
            )));
        }
        if self.k_v < 0.0 {
            return Err(ActuationError::Friction(format!(
                "k_v must be >= 0, got {}",
                self.k_v
            )));
        }
        Ok(())
    }

    /// Scales the Coulomb, static and viscous levels by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            f_c: self.f_c * factor,
            f_s: self.f_s * factor,
            v_s: self.v_s,
            k_v: self.k_v * factor,
        }
    }
}

impl Default for ScvParams {
    fn default() -> Self {
        Self {
            f_c: 1.0,
            f_s: 1.5,
            v_s: 0.1,
            k_v: 2.0,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `τ_F = (F_c + (F_s − F_c) e^{−(v/v_s)²}) sign(v) + k_v v`, with `sign(0) = 0`.
pub fn scv_friction(p: &ScvParams, v: f64) -> f64 {
    let r = v / p.v_s;
    (p.f_c + (p.f_s - p.f_c) * (-r * r).exp()) * sign(v) + p.k_v * v
}

/// Joint-side torque supplied by the motor, `R k_t I_m` (motor inertia neglected).
pub fn motor_torque_from_current(p: &MotorParams, current: f64) -> f64 {
    p.gain() * current
}

/// Current command `i_d = (τ_d + τ_F) / (R k_t)`.
pub fn current_from_desired_torque(p: &MotorParams, desired: f64, friction: f64) -> f64 {
    (desired + friction) / p.gain()
}
