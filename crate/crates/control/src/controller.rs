//! The control cascade and the deterministic single-threaded scheduler that
//! closes it around the plant: sense, estimate, control, actuate.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use sensorless_core::actuation::MotorParams;
use sensorless_core::pinn::{FrictionNet, VelocityBuffer};
use sensorless_core::rbd::RobotModel;
use sensorless_core::ukf::TorqueUkfConfig;
use sensorless_sim::humanoid;
use sensorless_sim::plant::{GroundTruth, Plant, SensorBundle};

use crate::artifacts::Artifacts;
use crate::balancer::{Balancer, BalancerConfig, ComReference};
use crate::estimation::{Estimator, EstimatorConfig, StateEstimate};
use crate::feedback::{RneaEstimator, UkfFeedback};
use crate::mode::{ControlMode, FeedbackSource};
use crate::pi::{PiConfig, TorquePi};
use crate::position::{PositionConfig, PositionController};
use crate::ControlError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub high_hz: f64,
    pub low_hz: f64,
    pub plant_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            high_hz: 100.0,
            low_hz: 1000.0,
            plant_hz: 20_000.0,
        }
    }
}

impl Rates {
    /// Low-level ticks per high-level update.
    pub fn high_divider(&self) -> Result<u64, ControlError> {
        divider(self.low_hz, self.high_hz)
    }

    /// Plant steps per low-level tick.
    pub fn plant_divider(&self) -> Result<u64, ControlError> {
        divider(self.plant_hz, self.low_hz)
    }
}

fn divider(fast: f64, slow: f64) -> Result<u64, ControlError> {
    let r = fast / slow;
    if !(r >= 1.0) || (r - r.round()).abs() > 1e-9 {
        return Err(ControlError::Schedule(format!(
            "{fast} Hz is not a multiple of {slow} Hz"
        )));
    }
    Ok(r.round() as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub mode: ControlMode,
    pub pi: PiConfig,
    pub balancer: BalancerConfig,
    pub position: PositionConfig,
    pub estimator: EstimatorConfig,
    pub ukf: TorqueUkfConfig,
    pub rates: Rates,
}

impl ControlConfig {
    /// Defaults for the bundled biped.
    pub fn standard(mode: ControlMode) -> Self {
        let soles: Vec<String> = humanoid::SOLES.iter().map(|s| s.to_string()).collect();
        let posture = vec!["torso_pitch".to_string(), "torso_roll".to_string()];
        Self {
            mode,
            pi: PiConfig::default(),
            balancer: BalancerConfig::standard(soles.clone(), posture.clone()),
            position: PositionConfig::standard(soles.clone(), posture),
            estimator: EstimatorConfig::standard(soles.clone(), humanoid::WAIST_IMU),
            ukf: TorqueUkfConfig::standard(soles, humanoid::PUSH_FRAME, humanoid::WAIST_IMU),
            rates: Rates::default(),
        }
    }
}

/// What the cascade produced in one low-level tick.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutput {
    pub t: f64,
    pub currents: DVector<f64>,
    /// Desired joint torque, joint damping included.
    pub tau_d: DVector<f64>,
    pub tau_cmd: DVector<f64>,
    /// Torque feedback the loop was closed on, if any.
    pub tau_feedback: Option<DVector<f64>>,
    /// PINN friction added to the command (zero without compensation).
    pub tau_friction: DVector<f64>,
    pub saturated: Vec<bool>,
    pub high_level_update: bool,
    /// The balancer found no foot in contact this tick.
    pub balancer_inactive: bool,
}

pub struct Controller {
    model: Arc<RobotModel>,
    config: ControlConfig,
    motors: Vec<MotorParams>,
    estimator: Estimator,
    balancer: Balancer,
    position: Option<PositionController>,
    pi: TorquePi,
    rnea: Option<RneaEstimator>,
    ukf: Option<UkfFeedback>,
    nets: Vec<FrictionNet>,
    buffers: Vec<VelocityBuffer>,
    tau_d: DVector<f64>,
    desired_positions: Option<DVector<f64>>,
    tick: u64,
    high_divider: u64,
}

impl Controller {
    pub fn new(
        model: Arc<RobotModel>,
        motors: Vec<MotorParams>,
        mut config: ControlConfig,
        artifacts: &Artifacts,
    ) -> Result<Self, ControlError> {
        let n = model.dof();
        if motors.len() != n {
            return Err(ControlError::Config(
                "one motor per joint is required".into(),
            ));
        }
        let high_divider = config.rates.high_divider()?;
        config.rates.plant_divider()?;
        let low_dt = 1.0 / config.rates.low_hz;
        let high_dt = 1.0 / config.rates.high_hz;
        config.estimator.dt = low_dt;
        config.estimator.gains = artifacts.kf;
        config.ukf.dt = low_dt;
        config.balancer.dt = high_dt;
        config.position.dt = high_dt;

        let posture_ref = humanoid::nominal_joint_positions(&model);
        let estimator = Estimator::new(model.clone(), &motors, config.estimator.clone())?;
        let balancer = Balancer::new(model.clone(), config.balancer.clone(), posture_ref.clone())?;
        let position = match config.mode {
            ControlMode::PositionControl => Some(PositionController::new(
                model.clone(),
                motors.clone(),
                config.position.clone(),
                posture_ref,
            )?),
            _ => None,
        };
        let pi = TorquePi::new(config.pi, motors.clone())?;
        let rnea = match config.mode.feedback() {
            FeedbackSource::Rnea => {
                Some(RneaEstimator::new(model.clone(), &config.estimator.soles)?)
            }
            _ => None,
        };
        let ukf = match config.mode.feedback() {
            FeedbackSource::Ukf => Some(UkfFeedback::new(
                model.clone(),
                motors.clone(),
                config.ukf.clone(),
            )?),
            _ => None,
        };
        let needs_pinn = config.mode.compensates_friction();
        let mut nets = Vec::new();
        if needs_pinn {
            for name in model.joint_names() {
                let net = artifacts
                    .pinn
                    .nets
                    .get(name)
                    .ok_or_else(|| ControlError::Artifact {
                        path: "pinn".into(),
                        message: format!("no friction network for joint `{name}`"),
                    })?;
                nets.push(net.clone());
            }
        }
        let buffers = nets
            .iter()
            .map(|net| VelocityBuffer::new(net.buffer_len))
            .collect();
        Ok(Self {
            model,
            motors,
            estimator,
            balancer,
            position,
            pi,
            rnea,
            ukf,
            nets,
            buffers,
            tau_d: DVector::zeros(n),
            desired_positions: None,
            tick: 0,
            high_divider,
            config,
        })
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn estimate(&self) -> Option<&StateEstimate> {
        self.estimator.last()
    }

    pub fn ukf(&self) -> Option<&UkfFeedback> {
        self.ukf.as_ref()
    }

    pub fn desired_positions(&self) -> Option<&DVector<f64>> {
        self.desired_positions.as_ref()
    }

    /// One low-level tick. The balancer runs on every `high_divider`-th tick.
    pub fn step(
        &mut self,
        bundle: &SensorBundle,
        reference: &ComReference,
    ) -> Result<ControlOutput, ControlError> {
        let n = self.model.dof();
        let dt = 1.0 / self.config.rates.low_hz;
        let est = self.estimator.update(bundle)?.clone();

        let mut friction = DVector::zeros(n);
        for (k, (buf, net)) in self.buffers.iter_mut().zip(&self.nets).enumerate() {
            buf.push(est.motor_velocity[k], est.nu[6 + k]);
            friction[k] = buf.predict(net)?;
        }

        let feedback = match (&self.rnea, &mut self.ukf) {
            (Some(rnea), _) => Some(rnea.from_estimate(&est)?),
            (_, Some(ukf)) => {
                if self.tick == 0 {
                    let tau_m = DVector::from_fn(n, |k, _| self.motors[k].gain() * est.currents[k]);
                    ukf.initialize(&est, &tau_m, &est.ft);
                }
                if self.config.mode.compensates_friction() {
                    let std = stiction_aware_std(
                        &self.nets,
                        &est.motor_velocity,
                        self.config.ukf.measurement.friction,
                    );
                    Some(ukf.step(&est, Some(&friction), Some(&std))?)
                } else {
                    Some(ukf.step(&est, None, None)?)
                }
            }
            _ => None,
        };

        let high = self.tick % self.high_divider == 0;
        let mut inactive = false;
        let out = if let Some(pos) = &mut self.position {
            if high {
                self.desired_positions = Some(pos.plan(&est, reference)?.clone());
            }
            let desired = self
                .desired_positions
                .as_ref()
                .expect("planned on the first tick");
            let servo = pos.servo(desired, &est.motor_position, &est.motor_velocity);
            ControlOutput {
                t: est.t,
                currents: servo.currents,
                tau_d: servo.tau_cmd.clone(),
                tau_cmd: servo.tau_cmd,
                tau_feedback: feedback,
                tau_friction: DVector::zeros(n),
                saturated: servo.saturated,
                high_level_update: high,
                balancer_inactive: inactive,
            }
        } else {
            if high {
                match self.balancer.update(&est, reference) {
                    Ok(out) => self.tau_d = out.tau_d,
                    // Airborne: keep the last torques until a foot lands.
                    Err(ControlError::Inactive { .. }) => inactive = true,
                    Err(e) => return Err(e),
                }
            }
            let target = &self.tau_d - est.nu.rows(6, n) * self.config.pi.joint_damping;
            let pi = self.pi.step(&target, feedback.as_ref(), &friction, dt);
            ControlOutput {
                t: est.t,
                currents: pi.currents,
                tau_d: target,
                tau_cmd: pi.tau_cmd,
                tau_feedback: feedback,
                tau_friction: friction,
                saturated: pi.saturated,
                high_level_update: high,
                balancer_inactive: inactive,
            }
        };
        self.tick += 1;
        Ok(out)
    }
}

/// Noise of the network's friction reading. At standstill friction is
/// anywhere within the breakaway band and velocities cannot tell where, so the
/// reading loses weight as the motor stops.
pub fn stiction_aware_std(
    nets: &[FrictionNet],
    motor_velocity: &DVector<f64>,
    base: f64,
) -> DVector<f64> {
    DVector::from_fn(nets.len(), |k, _| {
        let p = nets[k].scv;
        let stuck = p.f_s * (-(motor_velocity[k] / p.v_s).powi(2)).exp();
        (base * base + stuck * stuck).sqrt()
    })
}

/// One scheduler tick: the command computed from the samples at `t` and the
/// plant state it produced one period later.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub command: ControlOutput,
    pub truth: GroundTruth,
}

/// Plant and controller under the fixed-rate scheduler.
pub struct ClosedLoop {
    pub plant: Plant,
    pub controller: Controller,
    pending: Option<(SensorBundle, GroundTruth)>,
}

impl ClosedLoop {
    pub fn new(plant: Plant, controller: Controller) -> Result<Self, ControlError> {
        let rates = &controller.config().rates;
        let period = plant.config().sensor_period;
        if (period * rates.low_hz - 1.0).abs() > 1e-9 {
            return Err(ControlError::Schedule(format!(
                "plant samples every {period} s but the torque loop runs at {} Hz",
                rates.low_hz
            )));
        }
        if plant.config().substeps() as u64 != rates.plant_divider()? {
            return Err(ControlError::Schedule(format!(
                "plant integrates {} steps per sample, expected {}",
                plant.config().substeps(),
                rates.plant_divider()?
            )));
        }
        Ok(Self {
            plant,
            controller,
            pending: None,
        })
    }

    /// The latest sample and its ground truth, sampling the plant if needed.
    pub fn current_sample(&mut self) -> Result<&(SensorBundle, GroundTruth), ControlError> {
        if self.pending.is_none() {
            self.pending = Some(self.plant.sense()?);
        }
        Ok(self.pending.as_ref().unwrap())
    }

    /// Estimate, control, actuate for one period, then sample again.
    pub fn tick(&mut self, reference: &ComReference) -> Result<TickRecord, ControlError> {
        self.current_sample()?;
        let (bundle, _) = self.pending.take().unwrap();
        let command = self.controller.step(&bundle, reference)?;
        self.plant.advance(&command.currents)?;
        let next = self.plant.sense()?;
        let truth = next.1.clone();
        self.pending = Some(next);
        Ok(TickRecord { command, truth })
    }
}
