//! Force-distribution balancer: a CoM PD and a base-orientation PD give the
//! net contact wrench, which is split over the stance feet by weighted least
//! squares and mapped to joint torques through the floating-base dynamics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use sensorless_core::rbd::{
    self, skew, Configuration, Contact, FrameRef, RobotModel, SpatialForce,
};

use crate::estimation::StateEstimate;
use crate::ControlError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComReference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancerConfig {
    /// CoM stiffness and damping per axis, 1/s² and 1/s.
    pub com_kp: [f64; 3],
    pub com_kd: [f64; 3],
    /// Base attitude PD, N·m/rad and N·m·s/rad.
    pub attitude_kp: f64,
    pub attitude_kd: f64,
    /// Posture PD of the non-leg joints, as joint accelerations.
    pub posture_kp: f64,
    pub posture_kd: f64,
    /// Joints driven by the posture task instead of the contact forces.
    pub posture_joints: Vec<String>,
    /// Cost of contact moments about world x, y, z relative to contact forces.
    pub moment_weight: [f64; 3],
    /// Sole rectangle `[length, width]`, m; desired centers of pressure stay
    /// within `cop_margin` of it.
    pub foot_size: [f64; 2],
    pub cop_margin: f64,
    /// Largest change of any desired torque per second, N·m/s.
    pub rate_limit: f64,
    pub soles: Vec<String>,
    pub dt: f64,
}

impl BalancerConfig {
    pub fn standard(soles: Vec<String>, posture_joints: Vec<String>) -> Self {
        Self {
            com_kp: [60.0, 60.0, 100.0],
            com_kd: [14.0, 14.0, 20.0],
            attitude_kp: 300.0,
            attitude_kd: 30.0,
            posture_kp: 400.0,
            posture_kd: 40.0,
            posture_joints,
            moment_weight: [100.0, 10.0, 10.0],
            foot_size: [
                sensorless_sim::humanoid::FOOT_LENGTH,
                sensorless_sim::humanoid::FOOT_WIDTH,
            ],
            cop_margin: 0.8,
            rate_limit: 500.0,
            soles,
            dt: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalancerOutput {
    pub tau_d: DVector<f64>,
    /// Desired wrench per sole, sole coordinates (zero for swing soles).
    pub contact_wrenches: Vec<Vector6<f64>>,
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
}

pub struct Balancer {
    model: Arc<RobotModel>,
    config: BalancerConfig,
    soles: Vec<FrameRef>,
    posture: Vec<usize>,
    /// Joints moving each sole; they are held at the posture reference while
    /// that sole is off the ground.
    leg_joints: Vec<Vec<usize>>,
    posture_ref: DVector<f64>,
    last: Option<DVector<f64>>,
}

impl Balancer {
    pub fn new(
        model: Arc<RobotModel>,
        config: BalancerConfig,
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
        let gains = config.com_kp.iter().chain(&config.com_kd).chain([
            &config.attitude_kp,
            &config.attitude_kd,
            &config.posture_kp,
            &config.posture_kd,
        ]);
        if gains.into_iter().any(|g| !(*g >= 0.0))
            || !(config.rate_limit > 0.0)
            || config.moment_weight.iter().any(|w| !(*w > 0.0))
            || !(config.cop_margin > 0.0 && config.cop_margin <= 1.0)
        {
            return Err(ControlError::Config(
                "balancer gains must be nonnegative".into(),
            ));
        }
        if posture_ref.len() != model.dof() {
            return Err(ControlError::Config(
                "posture reference has the wrong size".into(),
            ));
        }
        let q0 = Configuration::new(rbd::Transform::identity(), posture_ref.clone());
        let n = model.dof();
        let leg_joints = soles
            .iter()
            .map(|f| {
                let j = rbd::frame_jacobian(&model, &q0, f);
                (0..n)
                    .filter(|&k| j.column(6 + k).amax() > 0.0 && !posture.contains(&k))
                    .collect()
            })
            .collect();
        Ok(Self {
            model,
            config,
            soles,
            posture,
            leg_joints,
            posture_ref,
            last: None,
        })
    }

    pub fn config(&self) -> &BalancerConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    /// Net wrench about the CoM, world coordinates, that the feet must supply.
    pub fn desired_wrench(
        &self,
        est: &StateEstimate,
        reference: &ComReference,
        com: &Vector3<f64>,
        com_vel: &Vector3<f64>,
    ) -> Vector6<f64> {
        let c = &self.config;
        let m = self.model.total_mass();
        let g = self.model.gravity();
        let acc = Vector3::from_fn(|i, _| {
            reference.acceleration[i]
                + c.com_kp[i] * (reference.position[i] - com[i])
                + c.com_kd[i] * (reference.velocity[i] - com_vel[i])
        });
        let force = m * (acc - g);
        let r = est.q.base.rotation;
        let err = attitude_error(&r);
        let omega = r * est.gyro;
        let moment = c.attitude_kp * err - c.attitude_kd * omega;
        Vector6::new(force.x, force.y, force.z, moment.x, moment.y, moment.z)
    }

    /// Splits `wrench` over the stance soles; returns world-frame `[F; M]` per sole.
    pub fn distribute(
        &self,
        q: &Configuration,
        stance: &[bool],
        com: &Vector3<f64>,
        wrench: &Vector6<f64>,
    ) -> Vec<Vector6<f64>> {
        let active: Vec<usize> = (0..self.soles.len()).filter(|&k| stance[k]).collect();
        let mut out = vec![Vector6::zeros(); self.soles.len()];
        if active.is_empty() {
            return out;
        }
        let cols = 6 * active.len();
        let mut grasp = DMatrix::zeros(6, cols);
        let mut w_inv = DVector::zeros(cols);
        for (j, &k) in active.iter().enumerate() {
            let p = rbd::frame_pose(&self.model, q, &self.soles[k]).translation;
            let mut g = DMatrix::<f64>::identity(6, 6);
            g.view_mut((3, 0), (3, 3)).copy_from(&skew(&(p - com)));
            grasp.view_mut((0, 6 * j), (6, 6)).copy_from(&g);
            for i in 0..3 {
                w_inv[6 * j + i] = 1.0;
                w_inv[6 * j + 3 + i] = 1.0 / self.config.moment_weight[i];
            }
        }
        let gw = &grasp * DMatrix::from_diagonal(&w_inv);
        let a = &gw * grasp.transpose();
        let y = a
            .clone()
            .cholesky()
            .map(|c| c.solve(&DVector::from_column_slice(wrench.as_slice())))
            .unwrap_or_else(|| {
                a.pseudo_inverse(1e-12).expect("svd")
                    * DVector::from_column_slice(wrench.as_slice())
            });
        let f = gw.transpose() * y;
        for (j, &k) in active.iter().enumerate() {
            out[k] = Vector6::from_iterator(f.rows(6 * j, 6).iter().copied());
        }
        out
    }

    /// Proper acceleration for the desired wrenches: the base block solves the
    /// base dynamics, held joints follow `sdd`, and each stance leg moves so
    /// that its sole stays still (least squares, one refinement pass).
    fn consistent_acceleration(
        &self,
        q: &Configuration,
        nu: &DVector<f64>,
        stance: &[bool],
        local: &[Vector6<f64>],
        held: &[usize],
        sdd: &DVector<f64>,
    ) -> Result<DVector<f64>, ControlError> {
        let model = &*self.model;
        let n = model.dof();
        let terms = rbd::DynamicsTerms::compute(model, q, nu, &self.soles)?;
        let m_b = terms
            .m_b()
            .cholesky()
            .ok_or_else(|| ControlError::Config("base inertia is singular".into()))?;
        let mut contact_rhs = -terms.bias.rows(0, 6).into_owned();
        for (j, w) in terms.jacobians.iter().zip(local) {
            contact_rhs +=
                j.view((0, 0), (6, 6)).transpose() * DVector::from_column_slice(w.as_slice());
        }
        let g = q.base.rotation.transpose() * model.gravity();
        let mut accel = DVector::zeros(6 + n);
        accel.rows_mut(6, n).copy_from(sdd);
        for pass in 0..2 {
            let base = m_b.solve(&(&contact_rhs - terms.m_bs() * accel.rows(6, n)));
            accel.rows_mut(0, 6).copy_from(&base);
            if pass == 1 {
                break;
            }
            for (k, joints) in self.leg_joints.iter().enumerate() {
                if !stance[k] {
                    continue;
                }
                let free: Vec<usize> = joints
                    .iter()
                    .copied()
                    .filter(|j| !held.contains(j))
                    .collect();
                if free.is_empty() {
                    continue;
                }
                let j = &terms.jacobians[k];
                let bias = rbd::frame_bias_acceleration(model, q, nu, &self.soles[k]).0;
                let mut rest = accel.clone();
                for &f in &free {
                    rest[6 + f] = 0.0;
                }
                let target =
                    -(DVector::from_column_slice(bias.as_slice()) + j.columns(0, 3) * g + j * rest);
                let jl = j.select_columns(free.iter().map(|f| 6 + f).collect::<Vec<_>>().iter());
                let x = jl
                    .svd(true, true)
                    .solve(&target, 1e-9)
                    .map_err(|e| ControlError::Config(format!("leg kinematics: {e}")))?;
                for (i, &f) in free.iter().enumerate() {
                    accel[6 + f] = x[i];
                }
            }
        }
        Ok(accel)
    }

    /// Desired joint torques at the high-level rate.
    pub fn update(
        &mut self,
        est: &StateEstimate,
        reference: &ComReference,
    ) -> Result<BalancerOutput, ControlError> {
        if !est.any_contact() {
            return Err(ControlError::Inactive { t: est.t });
        }
        let model = &*self.model;
        let n = model.dof();
        let q = &est.q;
        let nu = &est.nu;
        let com = rbd::center_of_mass(model, q);
        let com_vel = rbd::com_jacobian(model, q) * nu;
        let wrench = self.desired_wrench(est, reference, &com, &com_vel);
        let world = self.distribute(q, &est.contact, &com, &wrench);

        let mut contacts = Vec::with_capacity(self.soles.len());
        let mut local = Vec::with_capacity(self.soles.len());
        for (k, frame) in self.soles.iter().enumerate() {
            let rt: Matrix3<f64> = rbd::frame_pose(model, q, frame).rotation.transpose();
            let mut f = rt * world[k].fixed_rows::<3>(0);
            let mut m = rt * world[k].fixed_rows::<3>(3);
            // Unilateral contact: no pulling, center of pressure inside the sole.
            f.z = f.z.max(0.0);
            let [l, w] = self.config.foot_size;
            let c = self.config.cop_margin;
            m.x = m.x.clamp(-f.z * 0.5 * w * c, f.z * 0.5 * w * c);
            m.y = m.y.clamp(-f.z * 0.5 * l * c, f.z * 0.5 * l * c);
            let w = SpatialForce::new(f, m);
            local.push(w.0);
            contacts.push(Contact {
                frame: *frame,
                wrench: w,
            });
        }

        let mut sdd = DVector::zeros(n);
        for &k in &self.posture {
            sdd[k] = self.config.posture_kp * (self.posture_ref[k] - q.s[k])
                - self.config.posture_kd * nu[6 + k];
        }
        // A leg off the ground keeps its shape, damped, until it lands again.
        let mut held = self.posture.clone();
        for (k, joints) in self.leg_joints.iter().enumerate() {
            if !est.contact[k] {
                for &j in joints {
                    sdd[j] = -self.config.posture_kd * nu[6 + j];
                }
                held.extend(joints);
            }
        }
        let accel = self.consistent_acceleration(q, nu, &est.contact, &local, &held, &sdd)?;
        let mut tau = rbd::rnea_full(model, q, nu, &accel, &contacts)?
            .rows(6, n)
            .into_owned();

        if let Some(prev) = &self.last {
            let step = self.config.rate_limit * self.config.dt;
            for k in 0..n {
                tau[k] = tau[k].clamp(prev[k] - step, prev[k] + step);
            }
        }
        if tau.iter().any(|t| !t.is_finite()) {
            return Err(ControlError::Config(format!(
                "non-finite desired torque at t = {}",
                est.t
            )));
        }
        self.last = Some(tau.clone());
        Ok(BalancerOutput {
            tau_d: tau,
            contact_wrenches: local,
            com,
            com_velocity: com_vel,
        })
    }
}

/// Roll/pitch error: small rotation (world coordinates) bringing the base z axis back to vertical. Yaw is free.
pub fn attitude_error(r: &Matrix3<f64>) -> Vector3<f64> {
    let up = r * Vector3::z();
    up.cross(&Vector3::z())
}
