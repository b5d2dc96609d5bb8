//! Single-joint test bench: one elastic actuator driving a heavy sprung load.
//!
//! Used to record friction and encoder data away from the full robot. The
//! load is slow compared with the rotor, so high-frequency current content
//! makes the motor move while the joint barely does.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use sensorless_core::actuation::scv_friction;
use sensorless_core::pinn::FrictionSeries;
use sensorless_core::velocity_kf::{encoder_lsb, quantize};

use crate::config::{ActuatorConfig, NoiseConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sine {
    /// Current amplitude, A.
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub actuator: ActuatorConfig,
    /// Load inertia, kg·m².
    pub load_inertia: f64,
    /// Spring pulling the load back to zero, N·m/rad.
    pub load_stiffness: f64,
    pub load_damping: f64,
    pub noise: NoiseConfig,
    pub dt: f64,
    pub sensor_period: f64,
    pub duration: f64,
    /// Slow components moving the joint.
    pub slow: Vec<Sine>,
    /// Fast components moving mostly the rotor.
    pub fast: Vec<Sine>,
    /// Period of the envelope that fades the slow and fast groups in and out, s.
    pub envelope_period: f64,
    pub seed: u64,
}

impl RigConfig {
    /// A multisine excitation with random phases drawn from `seed`.
    pub fn multisine(actuator: ActuatorConfig, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5157);
        let mut sines = |freqs: &[f64], amp: f64| -> Vec<Sine> {
            freqs
                .iter()
                .map(|&f| Sine {
                    amplitude: amp,
                    frequency: f,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                })
                .collect()
        };
        let slow = sines(&[0.23, 0.61, 1.13, 1.9], 0.5);
        let fast = sines(&[38.0, 47.0, 61.0], 0.25);
        Self {
            actuator,
            load_inertia: 4.0,
            load_stiffness: 60.0,
            load_damping: 4.0,
            noise: NoiseConfig::default(),
            dt: 5e-5,
            sensor_period: 1e-3,
            duration,
            slow,
            fast,
            envelope_period: 7.0,
            seed,
        }
    }

    pub fn current(&self, t: f64) -> f64 {
        let w = std::f64::consts::TAU * t / self.envelope_period;
        let slow_gain = 0.5 * (1.0 + w.cos());
        let fast_gain = 0.5 * (1.0 + (2.0 * w).sin());
        let sum = |s: &[Sine]| -> f64 {
            s.iter()
                .map(|s| s.amplitude * (std::f64::consts::TAU * s.frequency * t + s.phase).sin())
                .sum()
        };
        slow_gain * sum(&self.slow) + fast_gain * sum(&self.fast)
    }
}

/// Sampled bench record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigLog {
    pub dt: f64,
    pub current: Vec<f64>,
    /// Quantized joint angle, rad.
    pub joint_encoder: Vec<f64>,
    /// Quantized motor angle, motor side, rad.
    pub motor_encoder: Vec<f64>,
    pub joint_velocity: Vec<f64>,
    /// `θ̇/R`.
    pub motor_velocity: Vec<f64>,
    /// Friction averaged over each sample period, N·m.
    pub friction: Vec<f64>,
    pub joint_position: Vec<f64>,
    pub motor_position: Vec<f64>,
}

impl RigLog {
    /// Friction series built from true velocities.
    pub fn true_series(&self) -> FrictionSeries {
        let mut s = FrictionSeries::default();
        for k in 0..self.friction.len() {
            s.push(
                self.motor_velocity[k],
                self.joint_velocity[k],
                self.friction[k],
            );
        }
        s
    }

    pub fn len(&self) -> usize {
        self.friction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.friction.is_empty()
    }
}

/// State `[φ, φ̇, s, ṡ]` with `φ = θ/R`.
fn derivative(c: &RigConfig, x: &[f64; 4], current: f64) -> ([f64; 4], f64) {
    let a = &c.actuator;
    let b = a.motor.reflected_inertia();
    let friction = scv_friction(&a.friction, x[1]);
    let tau = a.stiffness * (x[0] - x[2]) + a.damping * (x[1] - x[3]);
    let phi_dd = (a.motor.gain() * current - friction - tau) / b;
    let s_dd = (tau - c.load_stiffness * x[2] - c.load_damping * x[3]) / c.load_inertia;
    ([x[1], phi_dd, x[3], s_dd], friction)
}

pub fn run_rig(c: &RigConfig) -> RigLog {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let substeps = (c.sensor_period / c.dt).round().max(1.0) as usize;
    let samples = (c.duration / c.sensor_period).round() as usize;
    let h = c.sensor_period / substeps as f64;
    let r = c.actuator.motor.ratio;
    let (lsb_j, lsb_m) = (
        encoder_lsb(c.noise.joint_encoder_bits),
        encoder_lsb(c.noise.motor_encoder_bits),
    );
    let mut x = [0.0; 4];
    let mut log = RigLog {
        dt: c.sensor_period,
        ..RigLog::default()
    };
    let mut gauss = |std: f64| -> f64 {
        if std == 0.0 {
            0.0
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        }
    };
    for k in 0..samples {
        let t0 = k as f64 * c.sensor_period;
        let current = c.current(t0);
        let mut friction = 0.0;
        for _ in 0..substeps {
            let (k1, f1) = derivative(c, &x, current);
            let x2: [f64; 4] = std::array::from_fn(|i| x[i] + 0.5 * h * k1[i]);
            let (k2, f2) = derivative(c, &x2, current);
            let x3: [f64; 4] = std::array::from_fn(|i| x[i] + 0.5 * h * k2[i]);
            let (k3, f3) = derivative(c, &x3, current);
            let x4: [f64; 4] = std::array::from_fn(|i| x[i] + h * k3[i]);
            let (k4, f4) = derivative(c, &x4, current);
            for i in 0..4 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            friction += (f1 + 2.0 * f2 + 2.0 * f3 + f4) / 6.0;
        }
        let js = x[2] + gauss(c.noise.encoder_std);
        let ms = x[0] * r + gauss(c.noise.encoder_std);
        let q = c.noise.quantize;
        log.current.push(current + gauss(c.noise.current_std));
        log.joint_encoder
            .push(if q { quantize(js, lsb_j) } else { js });
        log.motor_encoder
            .push(if q { quantize(ms, lsb_m) } else { ms });
        log.joint_velocity.push(x[3]);
        log.motor_velocity.push(x[1]);
        log.friction.push(friction / substeps as f64);
        log.joint_position.push(x[2]);
        log.motor_position.push(x[0] * r);
    }
    log
}
