//! Joint-torque feedback sources: inverse dynamics on measured signals, and
//! the torque UKF driven by the same measurements.

use std::sync::Arc;

use nalgebra::{DVector, Vector6};

use sensorless_core::actuation::MotorParams;
use sensorless_core::rbd::{self, Configuration, Contact, FrameRef, RobotModel, SpatialForce};
use sensorless_core::ukf::{TorqueUkf, TorqueUkfConfig, UkfInputs, UkfMeasurement};

use sensorless_core::pinn::{FrictionNet, VelocityBuffer};
use sensorless_sim::plant::SensorBundle;

use crate::controller::stiction_aware_std;
use crate::estimation::{Estimator, EstimatorConfig, StateEstimate};
use crate::ControlError;

/// Joint torques from measured motion with the FT readings as the only
/// external wrenches. Contacts the sensors do not see are invisible to it.
#[derive(Clone, Debug)]
pub struct RneaEstimator {
    model: Arc<RobotModel>,
    ft_frames: Vec<FrameRef>,
}

impl RneaEstimator {
    pub fn new(model: Arc<RobotModel>, ft_frames: &[String]) -> Result<Self, ControlError> {
        let ft_frames = ft_frames
            .iter()
            .map(|f| model.frame(f).map_err(|_| ControlError::Frame(f.clone())))
            .collect::<Result<_, _>>()?;
        Ok(Self { model, ft_frames })
    }

    /// `accel` is the proper acceleration `[α^g_B; s̈]`; FT wrenches are in sensor coordinates.
    pub fn torques(
        &self,
        q: &Configuration,
        nu: &DVector<f64>,
        accel: &DVector<f64>,
        ft: &[Vector6<f64>],
    ) -> Result<DVector<f64>, ControlError> {
        if ft.len() != self.ft_frames.len() {
            return Err(ControlError::Config(format!(
                "expected {} FT readings, got {}",
                self.ft_frames.len(),
                ft.len()
            )));
        }
        let contacts: Vec<Contact> = self
            .ft_frames
            .iter()
            .zip(ft)
            .map(|(frame, w)| Contact {
                frame: *frame,
                wrench: SpatialForce(*w),
            })
            .collect();
        let n = self.model.dof();
        Ok(rbd::rnea_full(&self.model, q, nu, accel, &contacts)?
            .rows(6, n)
            .into_owned())
    }

    pub fn from_estimate(&self, est: &StateEstimate) -> Result<DVector<f64>, ControlError> {
        self.torques(&est.q, &est.nu, &est.accel, &est.ft)
    }
}

/// The torque UKF fed from a state estimate.
pub struct UkfFeedback {
    ukf: TorqueUkf,
    dt: f64,
}

impl UkfFeedback {
    pub fn new(
        model: Arc<RobotModel>,
        motors: Vec<MotorParams>,
        config: TorqueUkfConfig,
    ) -> Result<Self, ControlError> {
        let dt = config.dt;
        Ok(Self {
            ukf: TorqueUkf::new(model, motors, config)?,
            dt,
        })
    }

    pub fn filter(&self) -> &TorqueUkf {
        &self.ukf
    }

    /// Seeds velocity and IMU blocks from the first estimate, and the motor
    /// torque block from the measured currents.
    pub fn initialize(
        &mut self,
        est: &StateEstimate,
        motor_torque: &DVector<f64>,
        ft: &[Vector6<f64>],
    ) {
        let l = self.ukf.layout();
        self.ukf
            .set_block(l.velocity(), est.joint_velocity().as_slice());
        self.ukf
            .set_block(l.motor_torque(), motor_torque.as_slice());
        for (k, w) in ft.iter().enumerate() {
            self.ukf.set_block(l.ft() + 6 * k, w.as_slice());
        }
        self.ukf.set_block(l.acc(), est.imu.accel.as_slice());
        self.ukf.set_block(l.gyro(), est.imu.gyro.as_slice());
    }

    /// `friction_std` overrides the configured noise of the friction channel.
    pub fn step(
        &mut self,
        est: &StateEstimate,
        friction: Option<&DVector<f64>>,
        friction_std: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>, ControlError> {
        let inputs = UkfInputs {
            joint_positions: &est.q.s,
            base_linear_velocity: est.base_linear_velocity(),
        };
        let meas = UkfMeasurement {
            joint_velocity: est.joint_velocity(),
            currents: est.currents.clone(),
            friction: friction.cloned(),
            friction_std: friction_std.cloned(),
            ft: est.ft.clone(),
            accelerometer: est.imu.accel,
            gyroscope: est.imu.gyro,
        };
        self.ukf.step(&inputs, &meas, self.dt)?;
        Ok(self.ukf.joint_torque_estimate())
    }
}

/// Runs the estimator and the torque UKF over a recorded sensor stream.
/// With `nets`, the friction channel carries the network predictions.
pub fn replay_ukf(
    model: Arc<RobotModel>,
    motors: &[MotorParams],
    estimator: EstimatorConfig,
    ukf: TorqueUkfConfig,
    nets: Option<&[FrictionNet]>,
    bundles: &[SensorBundle],
) -> Result<Vec<DVector<f64>>, ControlError> {
    let mut est = Estimator::new(model.clone(), motors, estimator)?;
    let base_std = ukf.measurement.friction;
    let mut filter = UkfFeedback::new(model, motors.to_vec(), ukf)?;
    let mut buffers: Vec<VelocityBuffer> = nets
        .unwrap_or(&[])
        .iter()
        .map(|n| VelocityBuffer::new(n.buffer_len))
        .collect();
    let mut out = Vec::with_capacity(bundles.len());
    for (i, b) in bundles.iter().enumerate() {
        let e = est.update(b)?.clone();
        if i == 0 {
            let tau_m = DVector::from_fn(motors.len(), |k, _| motors[k].gain() * e.currents[k]);
            filter.initialize(&e, &tau_m, &e.ft);
        }
        let tau = match nets {
            Some(nets) => {
                let mut f = DVector::zeros(nets.len());
                for (k, (buf, net)) in buffers.iter_mut().zip(nets).enumerate() {
                    buf.push(e.motor_velocity[k], e.nu[6 + k]);
                    f[k] = buf.predict(net)?;
                }
                let std = stiction_aware_std(nets, &e.motor_velocity, base_std);
                filter.step(&e, Some(&f), Some(&std))?
            }
            None => filter.step(&e, None, None)?,
        };
        out.push(tau);
    }
    Ok(out)
}
