//! Unscented Kalman filtering: a generic scaled unscented transform and the
//! floating-base joint-torque estimator built on it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::actuation::MotorParams;
use crate::rbd::{self, BaseType, Configuration, FrameRef, RbdError, RobotModel, Transform};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum UkfError {
    #[error("covariance is degenerate even after jitter {0:e}")]
    Degenerate(f64),
    #[error("innovation covariance not positive definite in block `{0}`")]
    Innovation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("time step {dt} outside the expected schedule")]
    Schedule { dt: f64 },
    #[error(transparent)]
    Model(#[from] RbdError),
}

/// Scaled sigma-point parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl SigmaParams {
    /// `λ = α²(n + κ) − n`.
    pub fn lambda(&self, n: usize) -> f64 {
        self.alpha * self.alpha * (n as f64 + self.kappa) - n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPoints {
    /// One point per column, `n × (2n + 1)`.
    pub points: DMatrix<f64>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

/// Lower Cholesky factor, retrying with growing diagonal jitter.
fn robust_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, UkfError> {
    let n = cov.nrows();
    let scale = (0..n)
        .map(|i| cov[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut c = cov.clone();
        for i in 0..n {
            c[(i, i)] += jitter;
        }
        if let Some(ch) = c.cholesky() {
            return Ok(ch.l());
        }
        jitter = if jitter == 0.0 {
            scale * 1e-14
        } else {
            jitter * 100.0
        };
    }
    Err(UkfError::Degenerate(jitter))
}

pub fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    params: &SigmaParams,
) -> Result<SigmaPoints, UkfError> {
    let n = mean.len();
    if cov.shape() != (n, n) {
        return Err(UkfError::Dimension(format!(
            "covariance {:?} for mean of length {n}",
            cov.shape()
        )));
    }
    let lambda = params.lambda(n);
    let c = n as f64 + lambda;
    let l = robust_cholesky(cov)? * c.sqrt();
    let mut points = DMatrix::zeros(n, 2 * n + 1);
    points.set_column(0, mean);
    for i in 0..n {
        let col = l.column(i);
        points.set_column(1 + i, &(mean + col));
        points.set_column(1 + n + i, &(mean - col));
    }
    let w = 0.5 / c;
    let mut wm = vec![w; 2 * n + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / c;
    wc[0] = lambda / c + (1.0 - params.alpha * params.alpha + params.beta);
    Ok(SigmaPoints { points, wm, wc })
}

/// Weighted mean and covariance of transformed points.
///
/// The mean is accumulated as offsets from the central point: with small `α`
/// the central weight is a large negative number and a direct sum cancels.
pub fn unscented_moments(y: &DMatrix<f64>, wm: &[f64], wc: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let y0 = y.column(0).into_owned();
    let mut offset = DVector::zeros(y.nrows());
    for i in 1..y.ncols() {
        offset.axpy(wm[i], &(y.column(i) - &y0), 1.0);
    }
    let mean = &y0 + offset;
    let cov = weighted_cross(y, &mean, y, &mean, wc);
    (mean, cov)
}

fn weighted_cross(
    a: &DMatrix<f64>,
    ma: &DVector<f64>,
    b: &DMatrix<f64>,
    mb: &DVector<f64>,
    wc: &[f64],
) -> DMatrix<f64> {
    let mut da = a.clone();
    let mut db = b.clone();
    for i in 0..a.ncols() {
        let mut c = da.column_mut(i);
        c -= ma;
        let mut c = db.column_mut(i);
        c -= mb;
    }
    let mut weighted = da;
    for i in 0..weighted.ncols() {
        let mut c = weighted.column_mut(i);
        c *= wc[i];
    }
    weighted * db.transpose()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Innovation statistics of one update.
#[derive(Clone, Debug, PartialEq)]
pub struct Innovation {
    pub residual: DVector<f64>,
    pub covariance_diagonal: DVector<f64>,
}

/// Gaussian belief propagated with the scaled unscented transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Ukf {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub params: SigmaParams,
}

impl Ukf {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, params: SigmaParams) -> Self {
        Self { mean, cov, params }
    }

    /// Propagates sigma points through `f` and adds process noise `q`.
    pub fn predict<F>(&mut self, mut f: F, q: &DMatrix<f64>) -> Result<(), UkfError>
    where
        F: FnMut(&DVector<f64>) -> Result<DVector<f64>, UkfError>,
    {
        let sp = sigma_points(&self.mean, &self.cov, &self.params)?;
        let n = self.mean.len();
        let mut y = DMatrix::zeros(n, sp.points.ncols());
        for i in 0..sp.points.ncols() {
            let out = f(&sp.points.column(i).into_owned())?;
            if out.len() != n {
                return Err(UkfError::Dimension(
                    "process model changed the state size".into(),
                ));
            }
            y.set_column(i, &out);
        }
        let (mean, mut cov) = unscented_moments(&y, &sp.wm, &sp.wc);
        cov += q;
        symmetrize(&mut cov);
        self.mean = mean;
        self.cov = cov;
        Ok(())
    }

    /// Measurement update through `h` with noise `r`; `blocks` names row
    /// ranges for error reporting.
    pub fn update<H>(
        &mut self,
        z: &DVector<f64>,
        mut h: H,
        r: &DMatrix<f64>,
        blocks: &[(String, usize)],
    ) -> Result<Innovation, UkfError>
    where
        H: FnMut(&DVector<f64>) -> DVector<f64>,
    {
        let sp = sigma_points(&self.mean, &self.cov, &self.params)?;
        let m = z.len();
        let mut zp = DMatrix::zeros(m, sp.points.ncols());
        for i in 0..sp.points.ncols() {
            let out = h(&sp.points.column(i).into_owned());
            if out.len() != m {
                return Err(UkfError::Dimension(format!(
                    "measurement model returned {} rows, expected {m}",
                    out.len()
                )));
            }
            zp.set_column(i, &out);
        }
        let (z_mean, mut s) = unscented_moments(&zp, &sp.wm, &sp.wc);
        s += r;
        symmetrize(&mut s);
        let pxz = weighted_cross(&sp.points, &self.mean, &zp, &z_mean, &sp.wc);
        let chol = match s.clone().cholesky() {
            Some(c) => c,
            None => {
                let mut start = 0;
                let mut name = String::from("measurement");
                for (n, len) in blocks {
                    let blk = s.view((start, start), (*len, *len)).into_owned();
                    if blk.cholesky().is_none() {
                        name = n.clone();
                        break;
                    }
                    start += len;
                }
                return Err(UkfError::Innovation(name));
            }
        };
        // K = Pxz S⁻¹  ⇔  S Kᵀ = Pxzᵀ
        let k = chol.solve(&pxz.transpose()).transpose();
        let residual = z - &z_mean;
        self.mean += &k * &residual;
        self.cov -= &k * &s * k.transpose();
        symmetrize(&mut self.cov);
        Ok(Innovation {
            residual,
            covariance_diagonal: s.diagonal(),
        })
    }
}

/// Per-block standard deviations (diagonal noise).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockNoise {
    pub joint_velocity: f64,
    pub motor_torque: f64,
    pub friction: f64,
    pub ft_force: f64,
    pub ft_torque: f64,
    pub ext_force: f64,
    pub ext_torque: f64,
    pub accelerometer: f64,
    pub gyroscope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueUkfConfig {
    pub sigma: SigmaParams,
    /// Process noise per second (variance rate is std² · ΔT).
    pub process: BlockNoise,
    /// Measurement noise; `motor_torque` is read as current noise in A.
    pub measurement: BlockNoise,
    /// Initial standard deviations.
    pub initial: BlockNoise,
    pub ft_frames: Vec<String>,
    pub ext_frame: String,
    pub imu_frame: String,
    /// Nominal estimator period, s.
    pub dt: f64,
}

impl TorqueUkfConfig {
    pub fn standard(ft_frames: Vec<String>, ext_frame: &str, imu_frame: &str) -> Self {
        Self {
            sigma: SigmaParams::default(),
            process: BlockNoise {
                joint_velocity: 2.0,
                motor_torque: 60.0,
                friction: 20.0,
                ft_force: 600.0,
                ft_torque: 60.0,
                ext_force: 300.0,
                ext_torque: 30.0,
                accelerometer: 60.0,
                gyroscope: 10.0,
            },
            measurement: BlockNoise {
                joint_velocity: 0.05,
                motor_torque: 0.01,
                friction: 0.15,
                ft_force: 1.0,
                ft_torque: 0.05,
                ext_force: 0.0,
                ext_torque: 0.0,
                accelerometer: 0.05,
                gyroscope: 0.005,
            },
            initial: BlockNoise {
                joint_velocity: 0.1,
                motor_torque: 5.0,
                friction: 1.0,
                ft_force: 20.0,
                ft_torque: 2.0,
                ext_force: 5.0,
                ext_torque: 1.0,
                accelerometer: 1.0,
                gyroscope: 0.1,
            },
            ft_frames,
            ext_frame: ext_frame.to_string(),
            imu_frame: imu_frame.to_string(),
            dt: 1e-3,
        }
    }
}

/// Index ranges of the state blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub n_ft: usize,
}

impl StateLayout {
    pub fn velocity(&self) -> usize {
        0
    }
    pub fn motor_torque(&self) -> usize {
        self.n
    }
    pub fn friction(&self) -> usize {
        2 * self.n
    }
    pub fn ft(&self) -> usize {
        3 * self.n
    }
    pub fn ext(&self) -> usize {
        3 * self.n + 6 * self.n_ft
    }
    pub fn acc(&self) -> usize {
        self.ext() + 6
    }
    pub fn gyro(&self) -> usize {
        self.acc() + 3
    }
    pub fn dim(&self) -> usize {
        self.gyro() + 3
    }
}

/// Inputs of one estimator step.
#[derive(Clone, Debug)]
pub struct UkfInputs<'a> {
    /// Joint positions `s`.
    pub joint_positions: &'a DVector<f64>,
    /// Base linear velocity in base coordinates (e.g. from leg odometry).
    pub base_linear_velocity: Vector3<f64>,
}

/// One measurement vector; `friction` is `None` when the channel is masked.
#[derive(Clone, Debug, PartialEq)]
pub struct UkfMeasurement {
    pub joint_velocity: DVector<f64>,
    pub currents: DVector<f64>,
    pub friction: Option<DVector<f64>>,
    /// Per-joint standard deviation of `friction`, replacing the configured one.
    pub friction_std: Option<DVector<f64>>,
    /// Wrenches at the FT frames, in FT coordinates, force first.
    pub ft: Vec<Vector6<f64>>,
    pub accelerometer: Vector3<f64>,
    pub gyroscope: Vector3<f64>,
}

/// Floating-base UKF over `[ṡ, τ_m, τ_F, f_FT, f_ext, α_acc, ω_gyro]`.
#[derive(Clone, Debug)]
pub struct TorqueUkf {
    model: Arc<RobotModel>,
    motors: Vec<MotorParams>,
    config: TorqueUkfConfig,
    layout: StateLayout,
    ft_frames: Vec<FrameRef>,
    ext_frame: FrameRef,
    /// `ᴮH_S` of the IMU on the base link.
    imu: Transform,
    pub filter: Ukf,
    pub last_innovation: Option<Innovation>,
}

/// Joint-space terms fixed for one step (they depend on `s` only).
struct StepTerms {
    m_s: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    m_sb: DMatrix<f64>,
    ft_jt: Vec<DMatrix<f64>>,
    ext_jt: DMatrix<f64>,
    q: Configuration,
}

fn block_diag(layout: &StateLayout, noise: &BlockNoise, scale: f64) -> DMatrix<f64> {
    let mut d = DVector::zeros(layout.dim());
    let mut fill = |start: usize, len: usize, std: f64| {
        for i in start..start + len {
            d[i] = std * std * scale;
        }
    };
    fill(layout.velocity(), layout.n, noise.joint_velocity);
    fill(layout.motor_torque(), layout.n, noise.motor_torque);
    fill(layout.friction(), layout.n, noise.friction);
    for k in 0..layout.n_ft {
        fill(layout.ft() + 6 * k, 3, noise.ft_force);
        fill(layout.ft() + 6 * k + 3, 3, noise.ft_torque);
    }
    fill(layout.ext(), 3, noise.ext_force);
    fill(layout.ext() + 3, 3, noise.ext_torque);
    fill(layout.acc(), 3, noise.accelerometer);
    fill(layout.gyro(), 3, noise.gyroscope);
    DMatrix::from_diagonal(&d)
}

impl TorqueUkf {
    pub fn new(
        model: Arc<RobotModel>,
        motors: Vec<MotorParams>,
        config: TorqueUkfConfig,
    ) -> Result<Self, UkfError> {
        let n = model.dof();
        if motors.len() != n {
            return Err(UkfError::Dimension(format!(
                "{} motors for {n} joints",
                motors.len()
            )));
        }
        let ft_frames = config
            .ft_frames
            .iter()
            .map(|f| model.frame(f))
            .collect::<Result<Vec<_>, _>>()?;
        let ext_frame = model.frame(&config.ext_frame)?;
        let imu_ref = model.frame(&config.imu_frame)?;
        if imu_ref.link != 0 {
            return Err(UkfError::Model(RbdError::Structure(format!(
                "IMU frame `{}` must be attached to the base link",
                config.imu_frame
            ))));
        }
        let layout = StateLayout {
            n,
            n_ft: ft_frames.len(),
        };
        let mean = DVector::zeros(layout.dim());
        let cov = block_diag(&layout, &config.initial, 1.0);
        let filter = Ukf::new(mean, cov, config.sigma);
        Ok(Self {
            model,
            motors,
            layout,
            ft_frames,
            ext_frame,
            imu: imu_ref.offset,
            filter,
            config,
            last_innovation: None,
        })
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn config(&self) -> &TorqueUkfConfig {
        &self.config
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    /// Overwrites the mean of a state block.
    pub fn set_block(&mut self, start: usize, values: &[f64]) {
        self.filter
            .mean
            .rows_mut(start, values.len())
            .copy_from_slice(values);
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.filter.mean
    }

    /// `τ̂ = τ̂_m − τ̂_F`.
    pub fn joint_torque_estimate(&self) -> DVector<f64> {
        joint_torque_from_state(&self.layout, &self.filter.mean)
    }

    pub fn external_wrench(&self) -> Vector6<f64> {
        Vector6::from_iterator(self.filter.mean.rows(self.layout.ext(), 6).iter().copied())
    }

    fn step_terms(&self, s: &DVector<f64>) -> Result<StepTerms, UkfError> {
        let q = Configuration::new(Transform::identity(), s.clone());
        let nv = self.model.nv();
        let mut frames = self.ft_frames.clone();
        frames.push(self.ext_frame);
        let terms = rbd::DynamicsTerms::compute(&self.model, &q, &DVector::zeros(nv), &frames)?;
        let n = self.layout.n;
        let m_s = terms.m_s().cholesky().ok_or_else(|| {
            UkfError::Model(RbdError::Numerical("joint mass matrix singular".into()))
        })?;
        let jt = |j: &DMatrix<f64>| j.view((0, 6), (6, n)).transpose();
        Ok(StepTerms {
            m_s,
            m_sb: terms.m_sb(),
            ft_jt: terms.jacobians[..self.ft_frames.len()]
                .iter()
                .map(jt)
                .collect(),
            ext_jt: jt(&terms.jacobians[self.ft_frames.len()]),
            q,
        })
    }

    /// Base twist and proper acceleration from IMU blocks of a state sample.
    fn base_motion(&self, x: &DVector<f64>, v_lin: &Vector3<f64>) -> (Vector6<f64>, Vector6<f64>) {
        let l = &self.layout;
        let r_bs: Matrix3<f64> = self.imu.rotation;
        let offset = self.imu.translation;
        let gyro = Vector3::new(x[l.gyro()], x[l.gyro() + 1], x[l.gyro() + 2]);
        let acc = Vector3::new(x[l.acc()], x[l.acc() + 1], x[l.acc() + 2]);
        let w = r_bs * gyro;
        // Sensor point acceleration minus the rigid-body centripetal term and
        // the Coriolis-like ω × v of the spatial acceleration. The angular
        // base acceleration is neglected.
        let lin = r_bs * acc - w.cross(&w.cross(&offset)) - w.cross(v_lin);
        let twist = Vector6::new(v_lin.x, v_lin.y, v_lin.z, w.x, w.y, w.z);
        let accel = Vector6::new(lin.x, lin.y, lin.z, 0.0, 0.0, 0.0);
        (twist, accel)
    }

    fn propagate(
        &self,
        x: &DVector<f64>,
        terms: &StepTerms,
        v_lin: &Vector3<f64>,
        dt: f64,
    ) -> Result<DVector<f64>, UkfError> {
        let l = &self.layout;
        let n = l.n;
        let (twist, base_acc) = self.base_motion(x, v_lin);
        let mut nu = DVector::zeros(6 + n);
        nu.fixed_rows_mut::<6>(0).copy_from(&twist);
        nu.rows_mut(6, n).copy_from(&x.rows(l.velocity(), n));
        let c = rbd::rnea_full(&self.model, &terms.q, &nu, &DVector::zeros(6 + n), &[])?;
        let mut rhs = x.rows(l.motor_torque(), n) - x.rows(l.friction(), n) - c.rows(6, n);
        rhs -= &terms.m_sb * DVector::from_column_slice(base_acc.as_slice());
        for (k, jt) in terms.ft_jt.iter().enumerate() {
            rhs += jt * x.rows(l.ft() + 6 * k, 6);
        }
        rhs += &terms.ext_jt * x.rows(l.ext(), 6);
        let sdd = terms.m_s.solve(&rhs);
        let mut out = x.clone();
        let mut v = out.rows_mut(l.velocity(), n);
        v += sdd * dt;
        Ok(out)
    }

    /// Joint accelerations the process model assigns to a state sample.
    pub fn process_acceleration(
        &self,
        x: &DVector<f64>,
        inputs: &UkfInputs,
    ) -> Result<DVector<f64>, UkfError> {
        let terms = self.step_terms(inputs.joint_positions)?;
        let next = self.propagate(x, &terms, &inputs.base_linear_velocity, 1.0)?;
        Ok(next.rows(0, self.layout.n) - x.rows(0, self.layout.n))
    }

    /// Process model for one sample (exposed for tests).
    pub fn process_model(
        &self,
        x: &DVector<f64>,
        inputs: &UkfInputs,
        dt: f64,
    ) -> Result<DVector<f64>, UkfError> {
        let terms = self.step_terms(inputs.joint_positions)?;
        self.propagate(x, &terms, &inputs.base_linear_velocity, dt)
    }

    /// Linear measurement model; friction rows are omitted when masked.
    pub fn measurement_model(&self, x: &DVector<f64>, with_friction: bool) -> DVector<f64> {
        measurement_from_state(&self.layout, &self.motors, x, with_friction)
    }

    fn measurement_noise(
        &self,
        with_friction: bool,
        friction_std: Option<&DVector<f64>>,
    ) -> (DMatrix<f64>, Vec<(String, usize)>) {
        let l = &self.layout;
        let m = &self.config.measurement;
        let mut d = Vec::new();
        let mut blocks = Vec::new();
        let mut push = |name: &str, std: &mut dyn Iterator<Item = f64>| {
            let before = d.len();
            d.extend(std.map(|s| s * s));
            blocks.push((name.to_string(), d.len() - before));
        };
        let rep = |std: f64, len: usize| std::iter::repeat_n(std, len);
        push("joint_velocity", &mut rep(m.joint_velocity, l.n));
        push("motor_current", &mut rep(m.motor_torque, l.n));
        if with_friction {
            match friction_std {
                Some(std) => push("friction", &mut std.iter().copied()),
                None => push("friction", &mut rep(m.friction, l.n)),
            }
        }
        for k in 0..l.n_ft {
            push(&format!("ft{k}_force"), &mut rep(m.ft_force, 3));
            push(&format!("ft{k}_torque"), &mut rep(m.ft_torque, 3));
        }
        push("accelerometer", &mut rep(m.accelerometer, 3));
        push("gyroscope", &mut rep(m.gyroscope, 3));
        (DMatrix::from_diagonal(&DVector::from_vec(d)), blocks)
    }

    /// Stacks a measurement into the vector order of [`Self::measurement_model`].
    pub fn stack_measurement(&self, meas: &UkfMeasurement) -> Result<DVector<f64>, UkfError> {
        let l = &self.layout;
        if meas.joint_velocity.len() != l.n || meas.currents.len() != l.n || meas.ft.len() != l.n_ft
        {
            return Err(UkfError::Dimension(
                "measurement block sizes do not match the model".into(),
            ));
        }
        let mut z = Vec::with_capacity(3 * l.n + 6 * l.n_ft + 6);
        z.extend(meas.joint_velocity.iter());
        z.extend(meas.currents.iter());
        if let Some(f) = &meas.friction {
            if f.len() != l.n {
                return Err(UkfError::Dimension("friction block size".into()));
            }
            z.extend(f.iter());
        }
        for w in &meas.ft {
            z.extend(w.iter());
        }
        z.extend(meas.accelerometer.iter());
        z.extend(meas.gyroscope.iter());
        Ok(DVector::from_vec(z))
    }

    /// Predict with the process model, then update with `meas`.
    pub fn step(
        &mut self,
        inputs: &UkfInputs,
        meas: &UkfMeasurement,
        dt: f64,
    ) -> Result<(), UkfError> {
        if !(dt > 0.0) || (dt - self.config.dt).abs() > 0.1 * self.config.dt {
            return Err(UkfError::Schedule { dt });
        }
        let terms = self.step_terms(inputs.joint_positions)?;
        let v_lin = inputs.base_linear_velocity;
        let q = block_diag(&self.layout, &self.config.process, dt);
        let this = &*self;
        let mut filter = this.filter.clone();
        filter.predict(|x| this.propagate(x, &terms, &v_lin, dt), &q)?;
        let with_friction = meas.friction.is_some();
        let z = self.stack_measurement(meas)?;
        if let Some(std) = &meas.friction_std {
            if std.len() != self.layout.n || std.iter().any(|s| !(*s > 0.0)) {
                return Err(UkfError::Dimension(
                    "friction noise must be positive, one per joint".into(),
                ));
            }
        }
        let (r, blocks) = self.measurement_noise(with_friction, meas.friction_std.as_ref());
        let layout = self.layout;
        let motors = &self.motors;
        let innovation = filter.update(
            &z,
            |x| measurement_from_state(&layout, motors, x, with_friction),
            &r,
            &blocks,
        )?;
        self.filter = filter;
        self.last_innovation = Some(innovation);
        Ok(())
    }
}

pub fn joint_torque_from_state(layout: &StateLayout, x: &DVector<f64>) -> DVector<f64> {
    x.rows(layout.motor_torque(), layout.n) - x.rows(layout.friction(), layout.n)
}

fn measurement_from_state(
    layout: &StateLayout,
    motors: &[MotorParams],
    x: &DVector<f64>,
    with_friction: bool,
) -> DVector<f64> {
    let n = layout.n;
    let mut z = Vec::with_capacity(3 * n + 6 * layout.n_ft + 6);
    z.extend(x.rows(layout.velocity(), n).iter());
    z.extend((0..n).map(|k| x[layout.motor_torque() + k] / motors[k].gain()));
    if with_friction {
        z.extend(x.rows(layout.friction(), n).iter());
    }
    z.extend(x.rows(layout.ft(), 6 * layout.n_ft).iter());
    z.extend(x.rows(layout.acc(), 6).iter());
    DVector::from_vec(z)
}

/// Whether the model's base can be used by the estimator.
pub fn supports_model(model: &RobotModel) -> bool {
    model.base_type() == BaseType::Floating || model.base_type() == BaseType::Fixed
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn scalar_sigma_points() {
        let p = SigmaParams::default();
        let sp = sigma_points(
            &DVector::from_element(1, 0.0),
            &DMatrix::from_element(1, 1, 1.0),
            &p,
        )
        .unwrap();
        let spread = (1.0 + p.lambda(1)).sqrt();
        assert_eq!(sp.points[(0, 0)], 0.0);
        assert!((sp.points[(0, 1)] - spread).abs() < 1e-15);
        assert!((sp.points[(0, 2)] + spread).abs() < 1e-15);
        let (m, c) = unscented_moments(&sp.points, &sp.wm, &sp.wc);
        assert!(m[0].abs() < 1e-15);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mean_weights_sum_to_one() {
        for n in [1, 5, 48] {
            let sp = sigma_points(
                &DVector::zeros(n),
                &DMatrix::identity(n, n),
                &SigmaParams::default(),
            )
            .unwrap();
            let s: f64 = sp.wm.iter().sum();
            assert!((s - 1.0).abs() < 1e-9 * sp.wm[0].abs());
        }
    }

    #[test]
    fn reconstruction_up_to_full_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 10, 48] {
            let mean = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let cov = random_spd(n, &mut rng);
            let sp = sigma_points(&mean, &cov, &SigmaParams::default()).unwrap();
            let (m, c) = unscented_moments(&sp.points, &sp.wm, &sp.wc);
            assert!((m - &mean).amax() < 1e-10);
            assert!((c - &cov).amax() < 1e-10 * cov.amax().max(1.0));
        }
    }

    #[test]
    fn linear_transform_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let cov = random_spd(n, &mut rng);
        let a = DMatrix::from_fn(4, n, |_, _| rng.random_range(-2.0..2.0));
        let b = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let sp = sigma_points(&mean, &cov, &SigmaParams::default()).unwrap();
        let y = &a * &sp.points + DMatrix::from_fn(4, sp.points.ncols(), |r, _| b[r]);
        let (m, c) = unscented_moments(&y, &sp.wm, &sp.wc);
        assert_relative_eq!(m, &a * &mean + &b, epsilon = 1e-9);
        assert_relative_eq!(c, &a * &cov * a.transpose(), epsilon = 1e-9);
    }

    #[test]
    fn non_psd_covariance_is_degenerate() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -5.0]));
        assert!(matches!(
            sigma_points(&DVector::zeros(2), &cov, &SigmaParams::default()),
            Err(UkfError::Degenerate(_))
        ));
    }

    #[test]
    fn linear_gaussian_update_matches_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let cov = random_spd(n, &mut rng);
        let h = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
        let r = DMatrix::identity(2, 2) * 0.3;
        let z = DVector::from_vec(vec![0.4, -0.2]);
        let mut ukf = Ukf::new(mean.clone(), cov.clone(), SigmaParams::default());
        ukf.update(&z, |x| &h * x, &r, &[]).unwrap();
        let s = &h * &cov * h.transpose() + &r;
        let k = &cov * h.transpose() * s.clone().try_inverse().unwrap();
        assert_relative_eq!(ukf.mean, &mean + &k * (&z - &h * &mean), epsilon = 1e-9);
        assert_relative_eq!(ukf.cov, &cov - &k * &s * k.transpose(), epsilon = 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, proptest};

        proptest! {
            #[test]
            fn sigma_points_reproduce_the_moments(seed in any::<u64>(), n in 1usize..30, alpha in 1e-3..1.0f64) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mean = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
                let cov = random_spd(n, &mut rng);
                let params = SigmaParams { alpha, ..SigmaParams::default() };
                let sp = sigma_points(&mean, &cov, &params).unwrap();
                let (m, c) = unscented_moments(&sp.points, &sp.wm, &sp.wc);
                prop_assert!((m - &mean).amax() < 1e-9);
                prop_assert!((c - &cov).amax() < 1e-9 * cov.amax().max(1.0) / (alpha * alpha));
            }
        }
    }
}
