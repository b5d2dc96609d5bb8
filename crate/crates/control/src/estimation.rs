//! Proprioceptive state estimation at the sensor rate: per-channel velocity
//! filters, base attitude, leg odometry and IMU-derived base acceleration.

use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use sensorless_core::actuation::MotorParams;
use sensorless_core::rbd::{self, exp_so3, Configuration, FrameRef, RobotModel, Transform};
use sensorless_core::velocity_kf::{encoder_lsb, quantization_variance, KfGains, KfState};
use sensorless_sim::plant::{ImuReading, SensorBundle};

use crate::ControlError;

/// Gains of the two encoder classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KfBankGains {
    pub joint: KfGains,
    /// Motor channel, filtered in joint-side units (`θ/R`).
    pub motor: KfGains,
}

/// Rounded gains of a typical tuning run on the default bench, for use
/// without trained artifacts.
impl Default for KfBankGains {
    fn default() -> Self {
        Self {
            joint: KfGains {
                q_jerk: 100.0,
                q_accel: 1.0,
            },
            motor: KfGains {
                q_jerk: 1e7,
                q_accel: 5.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub gains: KfBankGains,
    pub joint_encoder_bits: u32,
    pub motor_encoder_bits: u32,
    pub soles: Vec<String>,
    pub imu: String,
    /// Normal force above which a sole counts as in contact, N.
    pub contact_threshold: f64,
    /// Accelerometer correction gain of the attitude filter, 1/s.
    pub attitude_gain: f64,
    pub dt: f64,
}

impl EstimatorConfig {
    pub fn standard(soles: Vec<String>, imu: &str) -> Self {
        Self {
            gains: KfBankGains::default(),
            joint_encoder_bits: 12,
            motor_encoder_bits: 16,
            soles,
            imu: imu.to_string(),
            contact_threshold: 15.0,
            attitude_gain: 1.0,
            dt: 1e-3,
        }
    }
}

/// Everything the controllers read.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEstimate {
    pub t: f64,
    /// Base pose in the support frame (mean stance sole at the origin).
    pub q: Configuration,
    pub nu: DVector<f64>,
    /// `[α^g_B; s̈]`, proper base acceleration from the IMU, angular part zero.
    pub accel: DVector<f64>,
    /// Joint-side motor positions and velocities, `θ/R` and `θ̇/R`.
    pub motor_position: DVector<f64>,
    pub motor_velocity: DVector<f64>,
    pub ft: Vec<Vector6<f64>>,
    pub contact: Vec<bool>,
    /// Base-coordinate angular velocity and specific force.
    pub gyro: Vector3<f64>,
    pub accelerometer: Vector3<f64>,
    /// The IMU reading as sampled, sensor coordinates.
    pub imu: ImuReading,
    pub currents: DVector<f64>,
}

impl StateEstimate {
    pub fn joint_velocity(&self) -> DVector<f64> {
        self.nu.rows(6, self.q.s.len()).into_owned()
    }

    pub fn base_linear_velocity(&self) -> Vector3<f64> {
        self.nu.fixed_rows::<3>(0).into_owned()
    }

    pub fn any_contact(&self) -> bool {
        self.contact.iter().any(|c| *c)
    }
}

/// Gyro integration with a first-order pull of the measured gravity
/// direction onto the world vertical.
#[derive(Clone, Debug, PartialEq)]
pub struct AttitudeFilter {
    pub rotation: Matrix3<f64>,
    pub gain: f64,
}

impl AttitudeFilter {
    /// Roll and pitch from a static accelerometer reading (base coordinates), zero yaw.
    pub fn from_gravity(acc_base: &Vector3<f64>, gain: f64) -> Self {
        let mut f = Self {
            rotation: Matrix3::identity(),
            gain,
        };
        // A reading far from 1 g is not a gravity measurement; start level.
        if (acc_base.norm() - 9.81).abs() < 0.1 * 9.81 {
            let up = acc_base.normalize();
            let axis = up.cross(&Vector3::z());
            let angle = up.dot(&Vector3::z()).clamp(-1.0, 1.0).acos();
            if axis.norm() > 1e-12 {
                f.rotation = exp_so3(&(axis.normalize() * angle));
            }
        }
        f
    }

    pub fn update(&mut self, gyro_base: &Vector3<f64>, acc_base: &Vector3<f64>, dt: f64) {
        self.rotation *= exp_so3(&(gyro_base * dt));
        let g = 9.81;
        let norm = acc_base.norm();
        if (norm - g).abs() < 0.1 * g {
            let up = self.rotation * (acc_base / norm);
            let err = up.cross(&Vector3::z());
            self.rotation = exp_so3(&(err * (self.gain * dt).min(1.0))) * self.rotation;
        }
    }
}

pub struct Estimator {
    model: Arc<RobotModel>,
    config: EstimatorConfig,
    ratios: Vec<f64>,
    soles: Vec<FrameRef>,
    imu: FrameRef,
    joint_kf: Vec<KfState>,
    motor_kf: Vec<KfState>,
    attitude: Option<AttitudeFilter>,
    last: Option<StateEstimate>,
}

impl Estimator {
    pub fn new(
        model: Arc<RobotModel>,
        motors: &[MotorParams],
        config: EstimatorConfig,
    ) -> Result<Self, ControlError> {
        let frame = |name: &String| {
            model
                .frame(name)
                .map_err(|_| ControlError::Frame(name.clone()))
        };
        let soles = config
            .soles
            .iter()
            .map(frame)
            .collect::<Result<Vec<_>, _>>()?;
        let imu = frame(&config.imu)?;
        if imu.link != 0 {
            return Err(ControlError::Config(format!(
                "IMU frame `{}` must be on the base link",
                config.imu
            )));
        }
        if motors.len() != model.dof() {
            return Err(ControlError::Config(
                "one motor per joint is required".into(),
            ));
        }
        Ok(Self {
            ratios: motors.iter().map(|m| m.ratio).collect(),
            model,
            soles,
            imu,
            joint_kf: Vec::new(),
            motor_kf: Vec::new(),
            attitude: None,
            last: None,
            config,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn last(&self) -> Option<&StateEstimate> {
        self.last.as_ref()
    }

    fn init(&mut self, b: &SensorBundle) -> Result<(), ControlError> {
        let dt = self.config.dt;
        let rj = quantization_variance(encoder_lsb(self.config.joint_encoder_bits));
        let lsb_m = encoder_lsb(self.config.motor_encoder_bits);
        self.joint_kf = b
            .joint_positions
            .iter()
            .map(|&z| KfState::new(dt, &self.config.gains.joint, rj, z))
            .collect::<Result<_, _>>()?;
        self.motor_kf = b
            .motor_positions
            .iter()
            .zip(&self.ratios)
            .map(|(&z, &r)| {
                KfState::new(
                    dt,
                    &self.config.gains.motor,
                    quantization_variance(lsb_m / r),
                    z / r,
                )
            })
            .collect::<Result<_, _>>()?;
        let acc = self.imu.offset.rotation
            * b.imu_reading(&self.config.imu)
                .ok_or_else(|| ControlError::Frame(self.config.imu.clone()))?
                .accel;
        self.attitude = Some(AttitudeFilter::from_gravity(
            &acc,
            self.config.attitude_gain,
        ));
        Ok(())
    }

    pub fn update(&mut self, b: &SensorBundle) -> Result<&StateEstimate, ControlError> {
        let n = self.model.dof();
        if b.joint_positions.len() != n
            || b.motor_positions.len() != n
            || b.ft.len() != self.soles.len()
        {
            return Err(ControlError::Config(
                "sensor bundle does not match the model".into(),
            ));
        }
        if self.last.is_none() {
            self.init(b)?;
        } else {
            for (kf, &z) in self.joint_kf.iter_mut().zip(b.joint_positions.iter()) {
                kf.step(z)?;
            }
            for ((kf, &z), &r) in self
                .motor_kf
                .iter_mut()
                .zip(b.motor_positions.iter())
                .zip(&self.ratios)
            {
                kf.step(z / r)?;
            }
        }
        let s = DVector::from_fn(n, |k, _| self.joint_kf[k].position());
        let sd = DVector::from_fn(n, |k, _| self.joint_kf[k].velocity());
        let sdd = DVector::from_fn(n, |k, _| self.joint_kf[k].acceleration());
        let motor_position = DVector::from_fn(n, |k, _| self.motor_kf[k].position());
        let motor_velocity = DVector::from_fn(n, |k, _| self.motor_kf[k].velocity());

        let reading = b
            .imu_reading(&self.config.imu)
            .ok_or_else(|| ControlError::Frame(self.config.imu.clone()))?
            .clone();
        let r_bs = self.imu.offset.rotation;
        let gyro = r_bs * reading.gyro;
        let acc = r_bs * reading.accel;
        let attitude = self.attitude.as_mut().expect("initialized");
        if self.last.is_some() {
            attitude.update(&gyro, &acc, self.config.dt);
        }
        let rotation = attitude.rotation;

        let contact: Vec<bool> =
            b.ft.iter()
                .map(|w| w[2] > self.config.contact_threshold)
                .collect();
        let q0 = Configuration::new(Transform::new(rotation, Vector3::zeros()), s.clone());
        let stance: Vec<usize> = (0..self.soles.len()).filter(|&k| contact[k]).collect();
        let used: Vec<usize> = if stance.is_empty() {
            (0..self.soles.len()).collect()
        } else {
            stance
        };
        let mut mean = Vector3::zeros();
        for &k in &used {
            mean += rbd::frame_pose(&self.model, &q0, &self.soles[k]).translation;
        }
        if !used.is_empty() {
            mean /= used.len() as f64;
        }
        let q = Configuration::new(Transform::new(rotation, -mean), s);

        // Leg odometry: stance soles have zero linear velocity.
        let mut nu = DVector::zeros(6 + n);
        nu.fixed_rows_mut::<3>(3).copy_from(&gyro);
        nu.rows_mut(6, n).copy_from(&sd);
        let mut v = Vector3::zeros();
        let mut count = 0.0;
        for (k, sole) in self.soles.iter().enumerate() {
            if !contact[k] {
                continue;
            }
            let j = rbd::frame_jacobian(&self.model, &q, sole);
            let a = j.fixed_view::<3, 3>(0, 0).into_owned();
            let rest = j.view((0, 3), (3, 3 + n)) * nu.rows(3, 3 + n);
            if let Some(inv) = a.try_inverse() {
                v -= inv * rest;
                count += 1.0;
            }
        }
        if count > 0.0 {
            v /= count;
        }
        nu.fixed_rows_mut::<3>(0).copy_from(&v);

        let r = self.imu.offset.translation;
        let lin = acc - gyro.cross(&gyro.cross(&r)) - gyro.cross(&v);
        let mut accel = DVector::zeros(6 + n);
        accel.fixed_rows_mut::<3>(0).copy_from(&lin);
        accel.rows_mut(6, n).copy_from(&sdd);

        self.last = Some(StateEstimate {
            t: b.t,
            q,
            nu,
            accel,
            motor_position,
            motor_velocity,
            ft: b.ft.clone(),
            contact,
            gyro,
            accelerometer: acc,
            imu: reading,
            currents: b.currents.clone(),
        });
        Ok(self.last.as_ref().unwrap())
    }
}
