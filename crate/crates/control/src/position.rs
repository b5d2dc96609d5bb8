//! Position-controlled baseline: the balancing task is solved kinematically
//! for desired joint angles, which stiff joint servos then track.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use sensorless_core::actuation::MotorParams;
use sensorless_core::rbd::{self, exp_so3, Configuration, FrameRef, RobotModel, Transform};

use crate::balancer::{attitude_error, ComReference};
use crate::estimation::StateEstimate;
use crate::ControlError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionConfig {
    /// Servo stiffness and damping on the motor-side angle, N·m/rad and N·m·s/rad.
    pub kp: f64,
    pub kd: f64,
    /// CoM task gain of the kinematic planner, 1/s.
    pub com_gain: f64,
    /// Gain pulling the soles back to their starting poses, 1/s.
    pub foot_gain: f64,
    /// Gain pulling base attitude and non-leg joints to their references, 1/s.
    pub posture_gain: f64,
    pub posture_joints: Vec<String>,
    pub current_limit: f64,
    pub soles: Vec<String>,
    pub dt: f64,
}

impl PositionConfig {
    pub fn standard(soles: Vec<String>, posture_joints: Vec<String>) -> Self {
        Self {
            kp: 3000.0,
            kd: 40.0,
            com_gain: 10.0,
            foot_gain: 10.0,
            posture_gain: 5.0,
            posture_joints,
            current_limit: 4.0,
            soles,
            dt: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServoOutput {
    pub currents: DVector<f64>,
    pub tau_cmd: DVector<f64>,
    pub saturated: Vec<bool>,
}

pub struct PositionController {
    model: Arc<RobotModel>,
    config: PositionConfig,
    motors: Vec<MotorParams>,
    soles: Vec<FrameRef>,
    posture: Vec<usize>,
    posture_ref: DVector<f64>,
    /// Sole poses at the first plan; the plan keeps pulling the soles back.
    anchors: Option<Vec<Transform>>,
    plan: Option<Configuration>,
}

impl PositionController {
    pub fn new(
        model: Arc<RobotModel>,
        motors: Vec<MotorParams>,
        config: PositionConfig,
        posture_ref: DVector<f64>,
    ) -> Result<Self, ControlError> {
        let soles = config
            .soles
            .iter()
            .map(|f| model.frame(f).map_err(|_| ControlError::Frame(f.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let posture = config
            .posture_joints
            .iter()
            .map(|j| {
                model
                    .dof_index(j)
                    .ok_or_else(|| ControlError::Config(format!("unknown joint `{j}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if [
            config.kp,
            config.kd,
            config.com_gain,
            config.foot_gain,
            config.posture_gain,
        ]
        .iter()
        .any(|g| !(*g >= 0.0))
        {
            return Err(ControlError::Config(
                "position gains must be nonnegative".into(),
            ));
        }
        Ok(Self {
            model,
            config,
            motors,
            soles,
            posture,
            posture_ref,
            anchors: None,
            plan: None,
        })
    }

    pub fn desired_positions(&self) -> Option<&DVector<f64>> {
        self.plan.as_ref().map(|q| &q.s)
    }

    /// One high-level period of the kinematic planner. The plan restarts from
    /// the measured configuration every period, with the soles held at the
    /// poses they had when balancing started.
    pub fn plan(
        &mut self,
        est: &StateEstimate,
        reference: &ComReference,
    ) -> Result<&DVector<f64>, ControlError> {
        let model = &*self.model;
        let n = model.dof();
        let q = Configuration::new(
            est.q.base,
            self.plan
                .as_ref()
                .map_or_else(|| est.q.s.clone(), |p| p.s.clone()),
        );
        let dt = self.config.dt;
        let anchors = self
            .anchors
            .get_or_insert_with(|| {
                self.soles
                    .iter()
                    .map(|f| rbd::frame_pose(model, &est.q, f))
                    .collect()
            })
            .clone();

        let feet = self.soles.len();
        let rows = 6 * feet + 3 + 3 + self.posture.len();
        let mut a = DMatrix::zeros(rows, 6 + n);
        let mut b = DVector::zeros(rows);
        let w_feet = 100.0;
        for (k, sole) in self.soles.iter().enumerate() {
            let j = rbd::frame_jacobian(model, &q, sole);
            a.view_mut((6 * k, 0), (6, 6 + n)).copy_from(&(j * w_feet));
            let pose = rbd::frame_pose(model, &q, sole);
            let rt = pose.rotation.transpose();
            let dp = rt * (anchors[k].translation - pose.translation);
            let dr = Rotation3::from_matrix_unchecked(rt * anchors[k].rotation).scaled_axis();
            let twist =
                Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z) * (self.config.foot_gain * w_feet);
            b.rows_mut(6 * k, 6).copy_from(&twist);
        }
        let r0 = 6 * feet;
        let com = rbd::center_of_mass(model, &q);
        let jc = rbd::com_jacobian(model, &q);
        a.view_mut((r0, 0), (3, 6 + n)).copy_from(&jc);
        let target = reference.velocity + (reference.position - com) * self.config.com_gain;
        b.rows_mut(r0, 3).copy_from(&target);
        // Base angular velocity (body coordinates) levels the base.
        let w_post = 0.1;
        let r1 = r0 + 3;
        for i in 0..3 {
            a[(r1 + i, 3 + i)] = w_post;
        }
        let level = q.base.rotation.transpose()
            * attitude_error(&q.base.rotation)
            * self.config.posture_gain;
        b.rows_mut(r1, 3).copy_from(&(level * w_post));
        for (i, &k) in self.posture.iter().enumerate() {
            a[(r1 + 3 + i, 6 + k)] = w_post;
            b[r1 + 3 + i] = w_post * self.config.posture_gain * (self.posture_ref[k] - q.s[k]);
        }
        let damping = 1e-6;
        let ata = a.transpose() * &a + DMatrix::identity(6 + n, 6 + n) * damping;
        let nu = ata
            .cholesky()
            .ok_or_else(|| ControlError::Config("kinematic planner is singular".into()))?
            .solve(&(a.transpose() * b));

        let v: Vector3<f64> = nu.fixed_rows::<3>(0).into_owned();
        let w: Vector3<f64> = nu.fixed_rows::<3>(3).into_owned();
        let base = Transform::new(
            q.base.rotation * exp_so3(&(w * dt)),
            q.base.translation + q.base.rotation * v * dt,
        );
        let s = &q.s + nu.rows(6, n) * dt;
        self.plan = Some(Configuration::new(base, s));
        Ok(&self.plan.as_ref().unwrap().s)
    }

    /// Joint servo on the motor-side angle: `τ = K_p (s_d − θ/R) − K_d θ̇/R`.
    pub fn servo(
        &self,
        desired: &DVector<f64>,
        motor_position: &DVector<f64>,
        motor_velocity: &DVector<f64>,
    ) -> ServoOutput {
        let n = desired.len();
        let mut tau = DVector::zeros(n);
        let mut currents = DVector::zeros(n);
        let mut saturated = vec![false; n];
        for k in 0..n {
            tau[k] = self.config.kp * (desired[k] - motor_position[k])
                - self.config.kd * motor_velocity[k];
            let i = tau[k] / self.motors[k].gain();
            saturated[k] = i.abs() > self.config.current_limit;
            currents[k] = i.clamp(-self.config.current_limit, self.config.current_limit);
        }
        ServoOutput {
            currents,
            tau_cmd: tau,
            saturated,
        }
    }
}
