//! Constant-acceleration Kalman filter over quantized encoder positions.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum KfError {
    #[error("innovation covariance is not positive ({0})")]
    Innovation(f64),
    #[error("invalid filter parameter: {0}")]
    Parameter(String),
}

/// Spectral densities of the two process-noise sources.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KfGains {
    /// White-jerk density, rad²/s⁵.
    pub q_jerk: f64,
    /// White-acceleration density on the velocity channel, rad²/s³.
    pub q_accel: f64,
}

impl KfGains {
    /// Genes are `log10` of the densities.
    pub fn from_genes(genes: &[f64]) -> Self {
        Self {
            q_jerk: 10f64.powf(genes[0]),
            q_accel: 10f64.powf(genes[1]),
        }
    }
}

impl Default for KfGains {
    fn default() -> Self {
        Self {
            q_jerk: 1e4,
            q_accel: 1e-6,
        }
    }
}

/// Tuned gains keyed by joint name, as written by the tuner.
pub type GainTable = BTreeMap<String, KfGains>;

/// Angular resolution of a `bits`-bit per revolution encoder.
pub fn encoder_lsb(bits: u32) -> f64 {
    std::f64::consts::TAU / f64::from(1u32 << bits.min(31))
}

/// Variance of uniform quantization noise, `LSB²/12`.
pub fn quantization_variance(lsb: f64) -> f64 {
    lsb * lsb / 12.0
}

pub fn transition(dt: f64) -> Matrix3<f64> {
    Matrix3::new(1.0, dt, 0.5 * dt * dt, 0.0, 1.0, dt, 0.0, 0.0, 1.0)
}

/// Discretized process noise for white jerk plus white acceleration.
pub fn process_noise(dt: f64, gains: &KfGains) -> Matrix3<f64> {
    let (d2, d3, d4, d5) = (dt * dt, dt.powi(3), dt.powi(4), dt.powi(5));
    let jerk = Matrix3::new(
        d5 / 20.0,
        d4 / 8.0,
        d3 / 6.0,
        d4 / 8.0,
        d3 / 3.0,
        d2 / 2.0,
        d3 / 6.0,
        d2 / 2.0,
        dt,
    );
    let accel = Matrix3::new(d3 / 3.0, d2 / 2.0, 0.0, d2 / 2.0, dt, 0.0, 0.0, 0.0, 0.0);
    jerk * gains.q_jerk + accel * gains.q_accel
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KfState {
    /// `[x, ẋ, ẍ]`.
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub q: Matrix3<f64>,
    pub r_meas: f64,
    pub dt: f64,
}

impl KfState {
    pub fn new(dt: f64, gains: &KfGains, r_meas: f64, x0: f64) -> Result<Self, KfError> {
        if !(dt > 0.0) {
            return Err(KfError::Parameter(format!("dt must be positive, got {dt}")));
        }
        if !(r_meas >= 0.0) || !(gains.q_jerk >= 0.0) || !(gains.q_accel >= 0.0) {
            return Err(KfError::Parameter(
                "noise levels must be nonnegative".into(),
            ));
        }
        Ok(Self {
            mean: Vector3::new(x0, 0.0, 0.0),
            cov: Matrix3::from_diagonal(&Vector3::new(r_meas.max(1e-12), 1.0, 100.0)),
            q: process_noise(dt, gains),
            r_meas,
            dt,
        })
    }

    pub fn position(&self) -> f64 {
        self.mean[0]
    }

    pub fn velocity(&self) -> f64 {
        self.mean[1]
    }

    pub fn acceleration(&self) -> f64 {
        self.mean[2]
    }

    pub fn predict(&self) -> Self {
        let f = transition(self.dt);
        Self {
            mean: f * self.mean,
            cov: f * self.cov * f.transpose() + self.q,
            ..*self
        }
    }

    /// Joseph-form update with `H = [1 0 0]`.
    pub fn update(&self, z: f64) -> Result<Self, KfError> {
        let s = self.cov[(0, 0)] + self.r_meas;
        if !(s > 0.0) {
            return Err(KfError::Innovation(s));
        }
        let k: Vector3<f64> = self.cov.column(0) / s;
        let innovation = z - self.mean[0];
        let h = RowVector3::new(1.0, 0.0, 0.0);
        let a = Matrix3::identity() - k * h;
        let cov = a * self.cov * a.transpose() + k * k.transpose() * self.r_meas;
        Ok(Self {
            mean: self.mean + k * innovation,
            cov: (cov + cov.transpose()) * 0.5,
            ..*self
        })
    }

    /// One predict/update cycle in place.
    pub fn step(&mut self, z: f64) -> Result<(), KfError> {
        *self = self.predict().update(z)?;
        Ok(())
    }
}

/// Runs a filter over a whole position trace, returning `[x, ẋ, ẍ]` per sample.
pub fn filter_trace(
    dt: f64,
    gains: &KfGains,
    r_meas: f64,
    z: &[f64],
) -> Result<Vec<Vector3<f64>>, KfError> {
    let Some(&z0) = z.first() else {
        return Ok(Vec::new());
    };
    let mut kf = KfState::new(dt, gains, r_meas, z0)?;
    let mut out = Vec::with_capacity(z.len());
    for &zk in z {
        kf.step(zk)?;
        out.push(kf.mean);
    }
    Ok(out)
}

/// Round-to-nearest quantization on a grid of step `lsb`.
pub fn quantize(x: f64, lsb: f64) -> f64 {
    (x / lsb).round() * lsb
}
