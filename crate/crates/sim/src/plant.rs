//! Fixed-step simulation of the floating-base robot with elastic actuators,
//! friction, penalty contacts and synthetic sensors.

use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use sensorless_core::actuation::scv_friction;
use sensorless_core::rbd::{
    self, exp_so3, BaseType, Configuration, Contact, FrameRef, RbdError, RobotModel, SpatialForce,
    Transform,
};
use sensorless_core::velocity_kf::{encoder_lsb, quantize};

use crate::config::{ActuatorConfig, PlantConfig, Transmission, CONFIG_VERSION};
use crate::events::{ObjectAction, ObjectEvent, Push};
use crate::humanoid;

#[derive(Debug, thiserror::Error)]
pub enum PlantError {
    #[error("simulation diverged at t = {t:.4} s")]
    Diverged { t: f64 },
    #[error("unknown frame `{0}`")]
    Frame(String),
    #[error("event rejected: {0}")]
    Event(String),
    #[error("invalid plant configuration: {0}")]
    Config(String),
    #[error("cannot read model `{path}`: {message}")]
    ModelFile { path: String, message: String },
    #[error(transparent)]
    Model(#[from] RbdError),
}

/// Full mechanical state.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    /// `ᴬH_B`.
    pub base: Transform,
    /// `[ᴮv; ᴮω]`.
    pub twist: Vector6<f64>,
    pub s: DVector<f64>,
    pub sd: DVector<f64>,
    /// Motor angles and velocities, motor side.
    pub theta: DVector<f64>,
    pub theta_dot: DVector<f64>,
}

impl PlantState {
    pub fn configuration(&self) -> Configuration {
        Configuration::new(self.base, self.s.clone())
    }

    pub fn nu(&self) -> DVector<f64> {
        let n = self.s.len();
        let mut nu = DVector::zeros(6 + n);
        nu.fixed_rows_mut::<6>(0).copy_from(&self.twist);
        nu.rows_mut(6, n).copy_from(&self.sd);
        nu
    }

    pub fn is_finite(&self) -> bool {
        self.base.translation.iter().all(|x| x.is_finite())
            && self.base.rotation.iter().all(|x| x.is_finite())
            && self.twist.iter().all(|x| x.is_finite())
            && [&self.s, &self.sd, &self.theta, &self.theta_dot]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    /// Proper linear acceleration of the sensor point, sensor frame, m/s².
    pub accel: Vector3<f64>,
    /// Angular velocity, sensor frame, rad/s.
    pub gyro: Vector3<f64>,
}

/// One sample of every sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorBundle {
    pub t: f64,
    pub joint_positions: DVector<f64>,
    /// Motor-side angles.
    pub motor_positions: DVector<f64>,
    pub currents: DVector<f64>,
    /// Contact wrench at each sole, sole frame, force first.
    pub ft: Vec<Vector6<f64>>,
    pub imu: Vec<ImuReading>,
    /// Frame name of each entry of `imu`.
    pub imu_frames: Vec<String>,
}

impl SensorBundle {
    pub fn imu_reading(&self, frame: &str) -> Option<&ImuReading> {
        self.imu_frames
            .iter()
            .position(|f| f == frame)
            .map(|i| &self.imu[i])
    }
}

/// Quantities only the simulator knows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t: f64,
    pub base: Transform,
    pub twist: Vector6<f64>,
    pub s: DVector<f64>,
    pub sd: DVector<f64>,
    pub sdd: DVector<f64>,
    pub theta: DVector<f64>,
    pub theta_dot: DVector<f64>,
    /// Torque delivered to the joint, N·m.
    pub tau: DVector<f64>,
    /// Friction averaged over the last sensor period, joint side, N·m.
    pub friction: DVector<f64>,
    pub currents: DVector<f64>,
    pub contact_wrenches: Vec<Vector6<f64>>,
    /// Sum of active pushes as a world-frame `[force; torque]`.
    pub external: Vector6<f64>,
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
}

#[derive(Clone, Debug)]
struct Rates {
    p_dot: Vector3<f64>,
    omega: Vector3<f64>,
    twist_dot: Vector6<f64>,
    sd: DVector<f64>,
    sdd: DVector<f64>,
    theta_dot: DVector<f64>,
    theta_ddot: DVector<f64>,
}

struct Evaluation {
    rates: Rates,
    tau: DVector<f64>,
    friction: DVector<f64>,
    proper: DVector<f64>,
    contacts: Vec<Vector6<f64>>,
    external: Vector6<f64>,
}

struct ResolvedPush {
    push: Push,
    frame: FrameRef,
}

#[derive(Clone, Copy, Debug)]
struct Obstacle {
    center: Vector2<f64>,
    half: Vector2<f64>,
    height: f64,
    start: f64,
    ramp: f64,
    /// Start and duration of the lowering, once removal has begun.
    removal: Option<(f64, f64)>,
}

fn ramp_fraction(t: f64, start: f64, ramp: f64) -> f64 {
    if ramp <= 0.0 {
        if t >= start {
            1.0
        } else {
            0.0
        }
    } else {
        ((t - start) / ramp).clamp(0.0, 1.0)
    }
}

impl Obstacle {
    fn height_at(&self, t: f64) -> f64 {
        let up = ramp_fraction(t, self.start, self.ramp);
        let down = self
            .removal
            .map_or(0.0, |(start, ramp)| ramp_fraction(t, start, ramp));
        self.height * up * (1.0 - down)
    }
}

struct ScheduledObject {
    event: ObjectEvent,
    foot: usize,
    done: bool,
}

pub struct Plant {
    model: Arc<RobotModel>,
    config: PlantConfig,
    actuators: Vec<ActuatorConfig>,
    soles: Vec<FrameRef>,
    imus: Vec<FrameRef>,
    state: PlantState,
    t: f64,
    steps: u64,
    anchors: Vec<[Option<Vector2<f64>>; 4]>,
    pushes: Vec<ResolvedPush>,
    objects: Vec<ScheduledObject>,
    obstacles: Vec<Option<Obstacle>>,
    rng: ChaCha8Rng,
    currents: DVector<f64>,
    friction_sum: DVector<f64>,
    friction_time: f64,
}

/// Loads the model named by a configuration.
pub fn load_model(config: &PlantConfig) -> Result<RobotModel, PlantError> {
    let text = match &config.model_path {
        Some(path) => std::fs::read_to_string(path).map_err(|e| PlantError::ModelFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?,
        None => humanoid::URDF.to_string(),
    };
    let text = if config.fixed_base {
        text.replace(r#"type="floating""#, r#"type="fixed""#)
    } else {
        text
    };
    Ok(rbd::parse_model(&text)?)
}

impl Plant {
    pub fn from_config(config: PlantConfig) -> Result<Self, PlantError> {
        let model = Arc::new(load_model(&config)?);
        Self::new(model, config)
    }

    pub fn new(model: Arc<RobotModel>, config: PlantConfig) -> Result<Self, PlantError> {
        validate(&config)?;
        let n = model.dof();
        let actuators: Vec<ActuatorConfig> = model
            .joint_names()
            .iter()
            .map(|j| config.actuator_for(j))
            .collect();
        for (a, name) in actuators.iter().zip(model.joint_names()) {
            a.motor
                .validate()
                .and_then(|_| a.friction.validate())
                .map_err(|e| PlantError::Config(format!("joint `{name}`: {e}")))?;
        }
        let frame = |name: &String| {
            model
                .frame(name)
                .map_err(|_| PlantError::Frame(name.clone()))
        };
        let soles = config
            .frames
            .soles
            .iter()
            .map(frame)
            .collect::<Result<Vec<_>, _>>()?;
        let imus = config
            .frames
            .imus
            .iter()
            .map(frame)
            .collect::<Result<Vec<_>, _>>()?;

        let q = if model.base_type() == BaseType::Floating && soles.len() == 2 {
            standing_on(&model, &soles, config.initial_preload)?
        } else {
            Configuration::new(
                Transform::identity(),
                humanoid::nominal_joint_positions(&model),
            )
        };
        // Springs start wound to the static load so the robot begins at rest.
        let preload = match config.transmission {
            Transmission::Elastic if !soles.is_empty() => static_joint_torques(&model, &q, &soles)?,
            _ => DVector::zeros(n),
        };
        let theta = DVector::from_fn(n, |k, _| {
            (q.s[k] + preload[k] / actuators[k].stiffness) * actuators[k].motor.ratio
        });
        let state = PlantState {
            base: q.base,
            twist: Vector6::zeros(),
            s: q.s,
            sd: DVector::zeros(n),
            theta,
            theta_dot: DVector::zeros(n),
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            actuators,
            anchors: vec![[None; 4]; soles.len()],
            obstacles: vec![None; soles.len()],
            soles,
            imus,
            state,
            t: 0.0,
            steps: 0,
            pushes: Vec::new(),
            objects: Vec::new(),
            rng,
            currents: DVector::zeros(n),
            friction_sum: DVector::zeros(n),
            friction_time: 0.0,
            model,
            config,
        })
    }

    pub fn model(&self) -> &Arc<RobotModel> {
        &self.model
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn actuators(&self) -> &[ActuatorConfig] {
        &self.actuators
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    /// Replaces the state; motor angles follow `s` for a rigid transmission.
    pub fn set_state(&mut self, mut state: PlantState) {
        if self.config.transmission == Transmission::Rigid {
            self.sync_rigid_motor(&mut state);
        }
        self.state = state;
        for a in &mut self.anchors {
            *a = [None; 4];
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn sole_frames(&self) -> &[FrameRef] {
        &self.soles
    }

    pub fn apply_disturbance(&mut self, push: Push) -> Result<(), PlantError> {
        let frame = self
            .model
            .frame(&push.frame)
            .map_err(|_| PlantError::Frame(push.frame.clone()))?;
        if !(push.duration >= 0.0) || !push.start.is_finite() {
            return Err(PlantError::Event(format!(
                "push at {} has invalid timing",
                push.frame
            )));
        }
        self.pushes.push(ResolvedPush { push, frame });
        Ok(())
    }

    /// Schedules an object insertion or removal under a sole.
    pub fn object_event(&mut self, event: ObjectEvent) -> Result<(), PlantError> {
        let foot = self
            .config
            .frames
            .soles
            .iter()
            .position(|s| *s == event.foot)
            .ok_or_else(|| PlantError::Frame(event.foot.clone()))?;
        if !(event.height >= 0.0) || !(event.ramp >= 0.0) {
            return Err(PlantError::Event(
                "object height and ramp must be nonnegative".into(),
            ));
        }
        let mut timeline: Vec<&ObjectEvent> = self
            .objects
            .iter()
            .filter(|o| o.foot == foot)
            .map(|o| &o.event)
            .collect();
        timeline.push(&event);
        timeline.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut present = self.obstacles[foot].is_some();
        for e in timeline {
            match (e.action, present) {
                (ObjectAction::Insert, true) => {
                    return Err(PlantError::Event(format!(
                        "object already under `{}` at {}",
                        e.foot, e.time
                    )))
                }
                (ObjectAction::Remove, false) => {
                    return Err(PlantError::Event(format!(
                        "no object under `{}` to remove at {}",
                        e.foot, e.time
                    )))
                }
                (ObjectAction::Insert, false) => present = true,
                (ObjectAction::Remove, true) => present = false,
            }
        }
        self.objects.push(ScheduledObject {
            event,
            foot,
            done: false,
        });
        Ok(())
    }

    fn sync_rigid_motor(&self, state: &mut PlantState) {
        for k in 0..state.s.len() {
            let r = self.actuators[k].motor.ratio;
            state.theta[k] = r * state.s[k];
            state.theta_dot[k] = r * state.sd[k];
        }
    }

    fn ground_height(&self, p: &Vector3<f64>, t: f64) -> f64 {
        let mut h: f64 = 0.0;
        for o in self.obstacles.iter().flatten() {
            let d = Vector2::new(p.x, p.y) - o.center;
            if d.x.abs() <= o.half.x && d.y.abs() <= o.half.y {
                h = h.max(o.height_at(t));
            }
        }
        h
    }

    fn corners(&self) -> [Vector3<f64>; 4] {
        let [l, w] = self.config.frames.foot_size;
        [
            Vector3::new(0.5 * l, 0.5 * w, 0.0),
            Vector3::new(0.5 * l, -0.5 * w, 0.0),
            Vector3::new(-0.5 * l, 0.5 * w, 0.0),
            Vector3::new(-0.5 * l, -0.5 * w, 0.0),
        ]
    }

    /// Corner forces (world) with positions, for one sole.
    fn corner_forces(
        &self,
        world: &[Transform],
        twists: &[rbd::SpatialMotion],
        sole: usize,
        t: f64,
    ) -> [(Vector3<f64>, Vector3<f64>, bool); 4] {
        let c = &self.config.contact;
        let frame = &self.soles[sole];
        let pose = world[frame.link].compose(&frame.offset);
        let v = frame.offset.motion_from_parent(&twists[frame.link]);
        let (lin, ang) = (v.linear(), v.angular());
        let corners = self.corners();
        let mut out = [(Vector3::zeros(), Vector3::zeros(), false); 4];
        for (i, r) in corners.iter().enumerate() {
            let p = pose.transform_point(r);
            let vel = pose.rotation * (lin + ang.cross(r));
            let pen = self.ground_height(&p, t) - p.z;
            if pen <= 0.0 {
                out[i] = (p, Vector3::zeros(), false);
                continue;
            }
            let normal = (c.stiffness * pen - c.damping * vel.z).max(0.0);
            let anchor = self.anchors[sole][i].unwrap_or(Vector2::new(p.x, p.y));
            let mut tangential = -(Vector2::new(p.x, p.y) - anchor) * c.tangential_stiffness
                - Vector2::new(vel.x, vel.y) * c.tangential_damping;
            let cap = c.friction_coefficient * normal;
            let mag = tangential.norm();
            if mag > cap {
                tangential *= cap / mag;
            }
            out[i] = (p, Vector3::new(tangential.x, tangential.y, normal), true);
        }
        out
    }

    fn evaluate(&self, x: &PlantState, t: f64) -> Result<Evaluation, PlantError> {
        let model = &*self.model;
        let n = model.dof();
        let q = x.configuration();
        let nu = x.nu();
        let (world, twists) = rbd::link_states(model, &q, &nu);

        let mut contacts = Vec::with_capacity(self.soles.len() + self.pushes.len());
        let mut sole_wrenches = Vec::with_capacity(self.soles.len());
        for (k, frame) in self.soles.iter().enumerate() {
            let pose = world[frame.link].compose(&frame.offset);
            let mut f = Vector3::zeros();
            let mut m = Vector3::zeros();
            for (p, force, _) in self.corner_forces(&world, &twists, k, t) {
                f += force;
                m += (p - pose.translation).cross(&force);
            }
            let rt = pose.rotation.transpose();
            let wrench = SpatialForce::new(rt * f, rt * m);
            sole_wrenches.push(wrench.0);
            contacts.push(Contact {
                frame: *frame,
                wrench,
            });
        }
        let mut external = Vector6::zeros();
        for p in self.pushes.iter().filter(|p| p.push.is_active(t)) {
            let pose = world[p.frame.link].compose(&p.frame.offset);
            let f = Vector3::from(p.push.force);
            let m = Vector3::from(p.push.torque);
            external += Vector6::new(f.x, f.y, f.z, m.x, m.y, m.z);
            let rt = pose.rotation.transpose();
            contacts.push(Contact {
                frame: p.frame,
                wrench: SpatialForce::new(rt * f, rt * m),
            });
        }

        let mut tau = DVector::zeros(n);
        let mut friction = DVector::zeros(n);
        let mut theta_ddot = DVector::zeros(n);
        let mut added = DVector::zeros(n);
        let rigid = self.config.transmission == Transmission::Rigid;
        for k in 0..n {
            let a = &self.actuators[k];
            let r = a.motor.ratio;
            let drive = a.motor.gain() * self.currents[k];
            if rigid {
                friction[k] = scv_friction(&a.friction, x.sd[k]);
                tau[k] = drive - friction[k];
                added[k] = a.motor.reflected_inertia();
            } else {
                let phi = x.theta[k] / r;
                let phi_dot = x.theta_dot[k] / r;
                friction[k] = scv_friction(&a.friction, phi_dot);
                tau[k] = a.stiffness * (phi - x.s[k]) + a.damping * (phi_dot - x.sd[k]);
                theta_ddot[k] = r * (drive - friction[k] - tau[k]) / a.motor.reflected_inertia();
            }
        }

        let proper = self.solve_dynamics(&q, &nu, &tau, &contacts, &added)?;
        let sdd = proper.rows(6, n).into_owned();
        if rigid {
            for k in 0..n {
                tau[k] -= added[k] * sdd[k];
                theta_ddot[k] = self.actuators[k].motor.ratio * sdd[k];
            }
        }
        let twist_dot = match model.base_type() {
            BaseType::Floating => {
                let g = x.base.rotation.transpose() * model.gravity();
                proper.fixed_rows::<6>(0).into_owned() + Vector6::new(g.x, g.y, g.z, 0.0, 0.0, 0.0)
            }
            BaseType::Fixed => Vector6::zeros(),
        };
        let rates = Rates {
            p_dot: x.base.rotation * x.twist.fixed_rows::<3>(0),
            omega: x.twist.fixed_rows::<3>(3).into_owned(),
            twist_dot,
            sd: x.sd.clone(),
            sdd,
            theta_dot: x.theta_dot.clone(),
            theta_ddot,
        };
        Ok(Evaluation {
            rates,
            tau,
            friction,
            proper,
            contacts: sole_wrenches,
            external,
        })
    }

    /// Proper acceleration with extra joint-diagonal inertia `added`.
    fn solve_dynamics(
        &self,
        q: &Configuration,
        nu: &DVector<f64>,
        tau: &DVector<f64>,
        contacts: &[Contact],
        added: &DVector<f64>,
    ) -> Result<DVector<f64>, PlantError> {
        let model = &*self.model;
        let n = model.dof();
        let mut m = rbd::mass_matrix(model, q)?;
        for k in 0..n {
            m[(6 + k, 6 + k)] += added[k];
        }
        let singular = || PlantError::Diverged { t: self.t };
        match model.base_type() {
            BaseType::Floating => {
                let mut rhs = -rbd::rnea_full(model, q, nu, &DVector::zeros(6 + n), contacts)?;
                let mut joints = rhs.rows_mut(6, n);
                joints += tau;
                m.cholesky().map(|c| c.solve(&rhs)).ok_or_else(singular)
            }
            BaseType::Fixed => {
                let g = q.base.rotation.transpose() * model.gravity();
                let mut accel = DVector::zeros(6 + n);
                accel.fixed_rows_mut::<3>(0).copy_from(&(-g));
                let h = rbd::rnea_full(model, q, nu, &accel, contacts)?;
                let rhs = tau - h.rows(6, n);
                let sdd = m
                    .view((6, 6), (n, n))
                    .into_owned()
                    .cholesky()
                    .map(|c| c.solve(&rhs))
                    .ok_or_else(singular)?;
                accel.rows_mut(6, n).copy_from(&sdd);
                Ok(accel)
            }
        }
    }

    fn displaced(&self, x: &PlantState, r: &Rates, h: f64) -> PlantState {
        let mut y = PlantState {
            base: Transform::new(
                x.base.rotation * exp_so3(&(r.omega * h)),
                x.base.translation + r.p_dot * h,
            ),
            twist: x.twist + r.twist_dot * h,
            s: &x.s + &r.sd * h,
            sd: &x.sd + &r.sdd * h,
            theta: &x.theta + &r.theta_dot * h,
            theta_dot: &x.theta_dot + &r.theta_ddot * h,
        };
        if self.model.base_type() == BaseType::Fixed {
            y.base = x.base;
            y.twist = Vector6::zeros();
        }
        y
    }

    fn fire_events(&mut self) {
        let t = self.t;
        for i in 0..self.objects.len() {
            if self.objects[i].done || self.objects[i].event.time > t {
                continue;
            }
            self.objects[i].done = true;
            let foot = self.objects[i].foot;
            let ev = self.objects[i].event.clone();
            match ev.action {
                ObjectAction::Insert => {
                    let frame = self.soles[foot];
                    let pose = rbd::frame_pose(&self.model, &self.state.configuration(), &frame);
                    let [l, w] = self.config.frames.foot_size;
                    self.obstacles[foot] = Some(Obstacle {
                        center: Vector2::new(pose.translation.x, pose.translation.y),
                        half: Vector2::new(0.5 * l + 0.04, 0.5 * w + 0.02),
                        height: ev.height,
                        start: ev.time,
                        ramp: ev.ramp,
                        removal: None,
                    });
                }
                ObjectAction::Remove => {
                    if ev.ramp > 0.0 {
                        if let Some(o) = self.obstacles[foot].as_mut() {
                            o.removal = Some((ev.time, ev.ramp));
                        }
                    } else {
                        self.obstacles[foot] = None;
                    }
                }
            }
        }
    }

    /// One RK4 step of length `dt` with currents held.
    pub fn step(&mut self) -> Result<(), PlantError> {
        self.fire_events();
        let h = self.config.dt;
        let t = self.t;
        let x = self.state.clone();
        let e1 = self.evaluate(&x, t)?;
        let e2 = self.evaluate(&self.displaced(&x, &e1.rates, 0.5 * h), t + 0.5 * h)?;
        let e3 = self.evaluate(&self.displaced(&x, &e2.rates, 0.5 * h), t + 0.5 * h)?;
        let e4 = self.evaluate(&self.displaced(&x, &e3.rates, h), t + h)?;
        let combine = |f: &dyn Fn(&Rates) -> DVector<f64>| {
            (f(&e1.rates) + f(&e2.rates) * 2.0 + f(&e3.rates) * 2.0 + f(&e4.rates)) / 6.0
        };
        let combine3 = |f: &dyn Fn(&Rates) -> Vector3<f64>| {
            (f(&e1.rates) + f(&e2.rates) * 2.0 + f(&e3.rates) * 2.0 + f(&e4.rates)) / 6.0
        };
        let rates = Rates {
            p_dot: combine3(&|r| r.p_dot),
            omega: combine3(&|r| r.omega),
            twist_dot: (e1.rates.twist_dot
                + e2.rates.twist_dot * 2.0
                + e3.rates.twist_dot * 2.0
                + e4.rates.twist_dot)
                / 6.0,
            sd: combine(&|r| r.sd.clone()),
            sdd: combine(&|r| r.sdd.clone()),
            theta_dot: combine(&|r| r.theta_dot.clone()),
            theta_ddot: combine(&|r| r.theta_ddot.clone()),
        };
        let mut next = self.displaced(&x, &rates, h);
        if self.config.transmission == Transmission::Rigid {
            self.sync_rigid_motor(&mut next);
        }
        self.friction_sum +=
            (&e1.friction + &e2.friction * 2.0 + &e3.friction * 2.0 + &e4.friction) * (h / 6.0);
        self.friction_time += h;
        self.t = t + h;
        self.steps += 1;
        if !next.is_finite() || next.twist.amax() > 1e3 || next.sd.amax() > 1e3 {
            return Err(PlantError::Diverged { t: self.t });
        }
        self.state = next;
        self.update_anchors();
        if self.steps % 1000 == 0 {
            self.state.base.rotation = orthonormalize(&self.state.base.rotation);
        }
        Ok(())
    }

    /// Holds `currents` for one sensor period.
    pub fn advance(&mut self, currents: &DVector<f64>) -> Result<(), PlantError> {
        if currents.len() != self.model.dof() || currents.iter().any(|c| !c.is_finite()) {
            return Err(PlantError::Config(
                "current command has wrong size or is not finite".into(),
            ));
        }
        self.currents.copy_from(currents);
        for _ in 0..self.config.substeps() {
            self.step()?;
        }
        Ok(())
    }

    fn update_anchors(&mut self) {
        let q = self.state.configuration();
        let nu = self.state.nu();
        let (world, twists) = rbd::link_states(&self.model, &q, &nu);
        let k_t = self.config.contact.tangential_stiffness;
        for sole in 0..self.soles.len() {
            let forces = self.corner_forces(&world, &twists, sole, self.t);
            for (i, (p, f, active)) in forces.iter().enumerate() {
                if !active {
                    self.anchors[sole][i] = None;
                    continue;
                }
                let pos = Vector2::new(p.x, p.y);
                match self.anchors[sole][i] {
                    None => self.anchors[sole][i] = Some(pos),
                    Some(a) => {
                        let spring = (pos - a) * k_t;
                        let cap = self.config.contact.friction_coefficient * f.z;
                        let mag = spring.norm();
                        if mag > cap && mag > 0.0 {
                            self.anchors[sole][i] = Some(pos - (pos - a) * (cap / mag));
                        }
                    }
                }
            }
        }
    }

    /// Samples all sensors at the current instant and returns the matching ground truth.
    pub fn sense(&mut self) -> Result<(SensorBundle, GroundTruth), PlantError> {
        let x = self.state.clone();
        let e = self.evaluate(&x, self.t)?;
        let model = self.model.clone();
        let n = model.dof();
        let q = x.configuration();
        let nu = x.nu();
        let noise = self.config.noise;
        let lsb_joint = encoder_lsb(noise.joint_encoder_bits);
        let lsb_motor = encoder_lsb(noise.motor_encoder_bits);

        let mut gauss = |std: f64| -> f64 {
            if std == 0.0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                std * z
            }
        };
        let mut joint_positions = DVector::zeros(n);
        let mut motor_positions = DVector::zeros(n);
        let mut currents = DVector::zeros(n);
        for k in 0..n {
            let js = x.s[k] + gauss(noise.encoder_std);
            let ms = x.theta[k] + gauss(noise.encoder_std);
            joint_positions[k] = if noise.quantize {
                quantize(js, lsb_joint)
            } else {
                js
            };
            motor_positions[k] = if noise.quantize {
                quantize(ms, lsb_motor)
            } else {
                ms
            };
            currents[k] = self.currents[k] + gauss(noise.current_std);
        }
        let ft = e
            .contacts
            .iter()
            .map(|w| {
                let mut m = *w;
                for i in 0..3 {
                    m[i] += gauss(noise.force_std);
                }
                for i in 3..6 {
                    m[i] += gauss(noise.torque_std);
                }
                m
            })
            .collect();
        let mut imu = Vec::with_capacity(self.imus.len());
        for frame in &self.imus {
            let a = rbd::frame_acceleration(&model, &q, &nu, &e.proper, frame);
            let v = rbd::frame_velocity(&model, &q, &nu, frame);
            let accel = a.linear() + v.angular().cross(&v.linear());
            let gyro = v.angular();
            imu.push(ImuReading {
                accel: accel.map(|c| c + gauss(noise.accel_std)),
                gyro: gyro.map(|c| c + gauss(noise.gyro_std)),
            });
        }
        let friction = if self.friction_time > 0.0 {
            &self.friction_sum / self.friction_time
        } else {
            e.friction.clone()
        };
        self.friction_sum.fill(0.0);
        self.friction_time = 0.0;
        let truth = GroundTruth {
            t: self.t,
            base: x.base,
            twist: x.twist,
            s: x.s.clone(),
            sd: x.sd.clone(),
            sdd: e.rates.sdd.clone(),
            theta: x.theta.clone(),
            theta_dot: x.theta_dot.clone(),
            tau: e.tau,
            friction,
            currents: self.currents.clone(),
            contact_wrenches: e.contacts,
            external: e.external,
            com: rbd::center_of_mass(&model, &q),
            com_velocity: rbd::com_jacobian(&model, &q) * &nu,
        };
        let bundle = SensorBundle {
            t: self.t,
            joint_positions,
            motor_positions,
            currents,
            ft,
            imu,
            imu_frames: self.config.frames.imus.clone(),
        };
        Ok((bundle, truth))
    }

    /// Kinetic plus gravitational plus transmission energy (contacts excluded).
    pub fn mechanical_energy(&self) -> f64 {
        let x = &self.state;
        let q = x.configuration();
        let mut e =
            rbd::kinetic_energy(&self.model, &q, &x.nu()) + rbd::potential_energy(&self.model, &q);
        for (k, a) in self.actuators.iter().enumerate() {
            let b = a.motor.reflected_inertia();
            let r = a.motor.ratio;
            match self.config.transmission {
                Transmission::Rigid => e += 0.5 * b * x.sd[k] * x.sd[k],
                Transmission::Elastic => {
                    let phi_dot = x.theta_dot[k] / r;
                    let defl = x.theta[k] / r - x.s[k];
                    e += 0.5 * b * phi_dot * phi_dot + 0.5 * a.stiffness * defl * defl;
                }
            }
        }
        e
    }
}

fn validate(c: &PlantConfig) -> Result<(), PlantError> {
    if c.version != CONFIG_VERSION {
        return Err(PlantError::Config(format!(
            "unsupported config version {}",
            c.version
        )));
    }
    if !(c.dt > 0.0) || !(c.sensor_period >= c.dt) {
        return Err(PlantError::Config("need 0 < dt <= sensor_period".into()));
    }
    let ratio = c.sensor_period / c.dt;
    if (ratio - ratio.round()).abs() > 1e-6 {
        return Err(PlantError::Config(
            "sensor_period must be a multiple of dt".into(),
        ));
    }
    if !(c.friction_scale > 0.0) {
        return Err(PlantError::Config(format!(
            "friction scale must be positive, got {}",
            c.friction_scale
        )));
    }
    Ok(())
}

/// Nominal posture with both soles at `z = -preload` (two-sole models only).
fn standing_on(
    model: &RobotModel,
    soles: &[FrameRef],
    preload: f64,
) -> Result<Configuration, PlantError> {
    let s = humanoid::nominal_joint_positions(model);
    let q = Configuration::new(Transform::identity(), s);
    let a = rbd::frame_pose(model, &q, &soles[0]).translation;
    let b = rbd::frame_pose(model, &q, &soles[1]).translation;
    let mid = (a + b) * 0.5;
    let base = Transform::new(
        Matrix3::identity(),
        Vector3::new(-mid.x, -mid.y, -mid.z - preload),
    );
    Ok(Configuration::new(base, q.s))
}

/// Joint torques holding `q` still when the soles carry the weight with the
/// smallest weighted contact wrenches.
pub fn static_joint_torques(
    model: &RobotModel,
    q: &Configuration,
    soles: &[FrameRef],
) -> Result<DVector<f64>, PlantError> {
    let n = model.dof();
    let terms = rbd::DynamicsTerms::compute(model, q, &DVector::zeros(6 + n), soles)?;
    if model.base_type() == BaseType::Fixed {
        return Ok(terms.gravity.clone());
    }
    let moment_weight: f64 = 10.0;
    let cols = 6 * soles.len();
    let mut a = nalgebra::DMatrix::zeros(6, cols);
    for (k, j) in terms.jacobians.iter().enumerate() {
        let mut block = j.view((0, 0), (6, 6)).transpose();
        for c in 3..6 {
            block.column_mut(c).scale_mut(1.0 / moment_weight.sqrt());
        }
        a.view_mut((0, 6 * k), (6, 6)).copy_from(&block);
    }
    let g = terms.gravity.rows(0, 6).into_owned();
    let pinv = a
        .pseudo_inverse(1e-12)
        .map_err(|e| PlantError::Config(e.to_string()))?;
    let mut f = pinv * g;
    for k in 0..soles.len() {
        for c in 3..6 {
            f[6 * k + c] /= moment_weight.sqrt();
        }
    }
    let mut tau = terms.gravity.rows(6, n).into_owned();
    for (k, j) in terms.jacobians.iter().enumerate() {
        tau -= j.view((0, 6), (6, n)).transpose() * f.rows(6 * k, 6);
    }
    Ok(tau)
}

fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y = (r.column(1) - x * x.dot(&r.column(1))).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}
