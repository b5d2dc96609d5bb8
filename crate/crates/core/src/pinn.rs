//! Physics-informed friction network.
//!
//! A two-hidden-layer ReLU perceptron maps a buffer of recent motor and joint
//! velocities to a friction torque. Training blends a data term with a
//! Stribeck-Coulomb-Viscous prior evaluated at the latest motor velocity:
//! `L = (1 − λ)·MSE(pred, target) + λ·MSE(pred, SCV(θ̇/R))`.
//!
//! Motor velocities are always given on the joint side, i.e. `θ̇/R`.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::actuation::{scv_friction, ScvParams};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PinnError {
    #[error("buffer length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("training diverged at step {0}")]
    Diverged(usize),
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("dataset too small: {0}")]
    Data(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Dense {
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn new(rows: usize, cols: usize, rng: &mut ChaCha8Rng, gain: f64) -> Self {
        let std = gain * (2.0 / cols as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        Self {
            rows,
            cols,
            w: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            out[r] = self.b[r] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub h1: usize,
    pub h2: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub buffer_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            h1: 32,
            h2: 32,
            dropout: 0.05,
            lambda: 0.3,
            buffer_len: 10,
            learning_rate: 3e-3,
            batch_size: 64,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), PinnError> {
        if self.h1 == 0 || self.h2 == 0 || self.buffer_len == 0 || self.batch_size == 0 {
            return Err(PinnError::Hyper("sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PinnError::Hyper(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PinnError::Hyper(format!(
                "lambda {} not in [0, 1]",
                self.lambda
            )));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(PinnError::Hyper("learning rate must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-feature affine input normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }
}

/// One training example: velocity buffers, oldest first, and the friction target.
#[derive(Clone, Debug, PartialEq)]
pub struct FrictionSample {
    pub motor_velocity: Vec<f64>,
    pub joint_velocity: Vec<f64>,
    pub target: f64,
}

impl FrictionSample {
    fn latest_motor_velocity(&self) -> f64 {
        *self.motor_velocity.last().unwrap_or(&0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrictionNet {
    pub version: u32,
    l1: Dense,
    l2: Dense,
    out: Dense,
    pub dropout: f64,
    pub lambda: f64,
    pub buffer_len: usize,
    pub normalization: Normalization,
    pub scv: ScvParams,
}

/// Scratch activations for one sample.
struct Activations {
    x: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    y: f64,
}

/// Gradient with the same layout as the flattened parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl FrictionNet {
    pub fn new(hp: &Hyperparameters, scv: ScvParams, seed: u64) -> Result<Self, PinnError> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 * hp.buffer_len;
        Ok(Self {
            version: 1,
            l1: Dense::new(hp.h1, d, &mut rng, 1.0),
            l2: Dense::new(hp.h2, hp.h1, &mut rng, 1.0),
            out: Dense::new(1, hp.h2, &mut rng, 0.5),
            dropout: hp.dropout,
            lambda: hp.lambda,
            buffer_len: hp.buffer_len,
            normalization: Normalization::identity(d),
            scv,
        })
    }

    /// Sets the output layer to zero.
    pub fn zero_output(&mut self) {
        self.out.w.iter_mut().for_each(|w| *w = 0.0);
        self.out.b[0] = 0.0;
    }

    pub fn input_dim(&self) -> usize {
        2 * self.buffer_len
    }

    pub fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.out.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in [&self.l1, &self.l2, &self.out] {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut i = 0;
        for l in [&mut self.l1, &mut self.l2, &mut self.out] {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[i..i + nw]);
            i += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[i..i + nb]);
            i += nb;
        }
    }

    /// Fits the input normalization to a sample set.
    pub fn fit_normalization(&mut self, samples: &[FrictionSample]) {
        let d = self.input_dim();
        let n = samples.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut x = vec![0.0; d];
        for s in samples {
            self.raw_input(s, &mut x);
            for k in 0..d {
                mean[k] += x[k];
                sq[k] += x[k] * x[k];
            }
        }
        let std = (0..d)
            .map(|k| {
                let m = mean[k] / n;
                let var = (sq[k] / n - m * m).max(0.0);
                var.sqrt().max(1e-6)
            })
            .collect();
        self.normalization = Normalization {
            mean: mean.iter().map(|m| m / n).collect(),
            std,
        };
    }

    fn raw_input(&self, s: &FrictionSample, x: &mut [f64]) {
        let l = self.buffer_len;
        x[..l].copy_from_slice(&s.motor_velocity);
        x[l..].copy_from_slice(&s.joint_velocity);
    }

    fn check(&self, s: &FrictionSample) -> Result<(), PinnError> {
        for len in [s.motor_velocity.len(), s.joint_velocity.len()] {
            if len != self.buffer_len {
                return Err(PinnError::Shape {
                    expected: self.buffer_len,
                    got: len,
                });
            }
        }
        Ok(())
    }

    fn forward(&self, s: &FrictionSample, masks: Option<(&[f64], &[f64])>) -> Activations {
        let mut x = vec![0.0; self.input_dim()];
        self.raw_input(s, &mut x);
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = (*xk - self.normalization.mean[k]) / self.normalization.std[k];
        }
        let mut z1 = vec![0.0; self.l1.rows];
        self.l1.forward(&x, &mut z1);
        let mut a1: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
        if let Some((m1, _)) = masks {
            a1.iter_mut().zip(m1).for_each(|(a, m)| *a *= m);
        }
        let mut z2 = vec![0.0; self.l2.rows];
        self.l2.forward(&a1, &mut z2);
        let mut a2: Vec<f64> = z2.iter().map(|z| z.max(0.0)).collect();
        if let Some((_, m2)) = masks {
            a2.iter_mut().zip(m2).for_each(|(a, m)| *a *= m);
        }
        let mut y = [0.0];
        self.out.forward(&a2, &mut y);
        Activations {
            x,
            z1,
            a1,
            z2,
            a2,
            y: y[0],
        }
    }

    /// Inference (dropout disabled).
    pub fn predict(
        &self,
        motor_velocity: &[f64],
        joint_velocity: &[f64],
    ) -> Result<f64, PinnError> {
        let s = FrictionSample {
            motor_velocity: motor_velocity.to_vec(),
            joint_velocity: joint_velocity.to_vec(),
            target: 0.0,
        };
        self.check(&s)?;
        Ok(self.forward(&s, None).y)
    }

    pub fn predict_sample(&self, s: &FrictionSample) -> Result<f64, PinnError> {
        self.check(s)?;
        Ok(self.forward(s, None).y)
    }

    /// The physics target for a sample.
    pub fn physics(&self, s: &FrictionSample) -> f64 {
        scv_friction(&self.scv, s.latest_motor_velocity())
    }

    /// Hybrid loss over a batch, without dropout.
    pub fn hybrid_loss(&self, batch: &[FrictionSample]) -> Result<f64, PinnError> {
        let (data, physics) = self.loss_parts(batch)?;
        Ok((1.0 - self.lambda) * data + self.lambda * physics)
    }

    /// `(MSE against targets, MSE against the SCV prior)`.
    pub fn loss_parts(&self, batch: &[FrictionSample]) -> Result<(f64, f64), PinnError> {
        if batch.is_empty() {
            return Err(PinnError::Data("empty batch".into()));
        }
        let (mut data, mut phys) = (0.0, 0.0);
        for s in batch {
            let y = self.predict_sample(s)?;
            data += (y - s.target).powi(2);
            phys += (y - self.physics(s)).powi(2);
        }
        let n = batch.len() as f64;
        Ok((data / n, phys / n))
    }

    /// Loss and gradient over a batch; `rng` draws dropout masks when given.
    pub fn loss_and_gradient(
        &self,
        batch: &[FrictionSample],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradient), PinnError> {
        if batch.is_empty() {
            return Err(PinnError::Data("empty batch".into()));
        }
        let mut grad = vec![0.0; self.param_count()];
        let (h1, h2, d) = (self.l1.rows, self.l2.rows, self.input_dim());
        let off_b1 = h1 * d;
        let off_w2 = off_b1 + h1;
        let off_b2 = off_w2 + h2 * h1;
        let off_w3 = off_b2 + h2;
        let off_b3 = off_w3 + h2;
        let n = batch.len() as f64;
        let keep = 1.0 - self.dropout;
        let mut rng = rng;
        let mut m1 = vec![1.0; h1];
        let mut m2 = vec![1.0; h2];
        let mut loss = 0.0;
        let mut d1 = vec![0.0; h1];
        let mut d2 = vec![0.0; h2];
        for s in batch {
            self.check(s)?;
            let masks = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => {
                    for m in m1.iter_mut().chain(m2.iter_mut()) {
                        *m = if r.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        };
                    }
                    Some((m1.as_slice(), m2.as_slice()))
                }
                _ => None,
            };
            let act = self.forward(s, masks);
            let phys = self.physics(s);
            let (ed, ep) = (act.y - s.target, act.y - phys);
            loss += (1.0 - self.lambda) * ed * ed + self.lambda * ep * ep;
            let dy = 2.0 * ((1.0 - self.lambda) * ed + self.lambda * ep) / n;

            grad[off_b3] += dy;
            for j in 0..h2 {
                grad[off_w3 + j] += dy * act.a2[j];
                let mask = masks.map_or(1.0, |(_, m)| m[j]);
                d2[j] = if act.z2[j] > 0.0 {
                    dy * self.out.w[j] * mask
                } else {
                    0.0
                };
            }
            for i in 0..h1 {
                d1[i] = 0.0;
            }
            for j in 0..h2 {
                if d2[j] == 0.0 {
                    continue;
                }
                grad[off_b2 + j] += d2[j];
                let row = &self.l2.w[j * h1..(j + 1) * h1];
                let g = &mut grad[off_w2 + j * h1..off_w2 + (j + 1) * h1];
                for i in 0..h1 {
                    g[i] += d2[j] * act.a1[i];
                    d1[i] += d2[j] * row[i];
                }
            }
            for i in 0..h1 {
                let mask = masks.map_or(1.0, |(m, _)| m[i]);
                let di = if act.z1[i] > 0.0 { d1[i] * mask } else { 0.0 };
                if di == 0.0 {
                    continue;
                }
                grad[off_b1 + i] += di;
                let g = &mut grad[i * d..(i + 1) * d];
                for k in 0..d {
                    g[k] += di * act.x[k];
                }
            }
        }
        Ok((loss / n, Gradient(grad)))
    }
}

/// Adam optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, params: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / b1t;
            let vh = self.v[k] / b2t;
            params[k] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// One optimizer step on a batch; returns the batch loss before the update.
pub fn train_step(
    net: &mut FrictionNet,
    batch: &[FrictionSample],
    opt: &mut Adam,
    rng: &mut ChaCha8Rng,
    step: usize,
) -> Result<f64, PinnError> {
    let (loss, grad) = net.loss_and_gradient(batch, Some(rng))?;
    if !loss.is_finite() || grad.0.iter().any(|g| !g.is_finite()) {
        return Err(PinnError::Diverged(step));
    }
    let mut p = net.params();
    opt.apply(&mut p, &grad.0);
    net.set_params(&p);
    Ok(loss)
}

/// Aligned 1 kHz series for one joint, joint-side velocities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrictionSeries {
    pub motor_velocity: Vec<f64>,
    pub joint_velocity: Vec<f64>,
    pub friction: Vec<f64>,
}

impl FrictionSeries {
    pub fn len(&self) -> usize {
        self.friction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.friction.is_empty()
    }

    pub fn push(&mut self, motor_velocity: f64, joint_velocity: f64, friction: f64) {
        self.motor_velocity.push(motor_velocity);
        self.joint_velocity.push(joint_velocity);
        self.friction.push(friction);
    }

    pub fn append(&mut self, other: &FrictionSeries) {
        self.motor_velocity.extend_from_slice(&other.motor_velocity);
        self.joint_velocity.extend_from_slice(&other.joint_velocity);
        self.friction.extend_from_slice(&other.friction);
    }

    /// Sample ending at index `t` (needs `t + 1 >= buffer_len`).
    pub fn sample(&self, t: usize, buffer_len: usize) -> FrictionSample {
        let lo = t + 1 - buffer_len;
        FrictionSample {
            motor_velocity: self.motor_velocity[lo..=t].to_vec(),
            joint_velocity: self.joint_velocity[lo..=t].to_vec(),
            target: self.friction[t],
        }
    }

    /// Every sample with a full buffer, optionally subsampled by `stride`.
    pub fn samples(&self, buffer_len: usize, stride: usize) -> Vec<FrictionSample> {
        (buffer_len.saturating_sub(1)..self.len())
            .step_by(stride.max(1))
            .map(|t| self.sample(t, buffer_len))
            .collect()
    }

    /// Contiguous split at `fraction` of the length.
    pub fn split(&self, fraction: f64) -> (FrictionSeries, FrictionSeries) {
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let part = |r: std::ops::Range<usize>| FrictionSeries {
            motor_velocity: self.motor_velocity[r.clone()].to_vec(),
            joint_velocity: self.joint_velocity[r.clone()].to_vec(),
            friction: self.friction[r].to_vec(),
        };
        (part(0..cut), part(cut..self.len()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed: u64,
    /// Subsampling stride when building samples from a series.
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            seed: 0,
            stride: 1,
        }
    }
}

/// Trains a fresh net on `samples`; returns the net and per-step losses.
pub fn train(
    hp: &Hyperparameters,
    scv: ScvParams,
    samples: &[FrictionSample],
    config: &TrainConfig,
) -> Result<(FrictionNet, Vec<f64>), PinnError> {
    if samples.is_empty() {
        return Err(PinnError::Data("no training samples".into()));
    }
    let mut net = FrictionNet::new(hp, scv, config.seed)?;
    net.fit_normalization(samples);
    let mut opt = Adam::new(hp.learning_rate, net.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(config.steps);
    let mut batch = Vec::with_capacity(hp.batch_size);
    for step in 0..config.steps {
        batch.clear();
        while batch.len() < hp.batch_size.min(samples.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(samples[order[cursor]].clone());
            cursor += 1;
        }
        losses.push(train_step(&mut net, &batch, &mut opt, &mut rng, step)?);
    }
    Ok((net, losses))
}

/// Inclusive ranges sampled uniformly by the random search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub h1: (usize, usize),
    pub h2: (usize, usize),
    pub dropout: (f64, f64),
    pub lambda: (f64, f64),
    pub buffer_len: (usize, usize),
    /// Sampled uniformly in `log10`.
    pub learning_rate: (f64, f64),
    pub batch_size: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            h1: (8, 48),
            h2: (8, 48),
            dropout: (0.0, 0.2),
            lambda: (0.0, 0.6),
            buffer_len: (2, 16),
            learning_rate: (1e-3, 1e-2),
            batch_size: vec![32, 64, 128],
        }
    }
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Hyperparameters {
        let (lr_lo, lr_hi) = (self.learning_rate.0.log10(), self.learning_rate.1.log10());
        Hyperparameters {
            h1: rng.random_range(self.h1.0..=self.h1.1),
            h2: rng.random_range(self.h2.0..=self.h2.1),
            dropout: rng.random_range(self.dropout.0..=self.dropout.1),
            lambda: rng.random_range(self.lambda.0..=self.lambda.1),
            buffer_len: rng.random_range(self.buffer_len.0..=self.buffer_len.1),
            learning_rate: 10f64.powf(rng.random_range(lr_lo..=lr_hi)),
            batch_size: *self.batch_size.choose(rng).unwrap_or(&64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hyperparameters: Hyperparameters,
    pub validation_mse: f64,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: FrictionNet,
    pub best_trial: usize,
    pub trials: Vec<Trial>,
}

/// Validation MSE of `net` against the data targets of a series.
pub fn validation_mse(
    net: &FrictionNet,
    series: &FrictionSeries,
    stride: usize,
) -> Result<f64, PinnError> {
    let samples = series.samples(net.buffer_len, stride);
    if samples.is_empty() {
        return Err(PinnError::Data(
            "validation split has no full buffers".into(),
        ));
    }
    let mut acc = 0.0;
    for s in &samples {
        acc += (net.predict_sample(s)? - s.target).powi(2);
    }
    Ok(acc / samples.len() as f64)
}

/// Random hyperparameter search; the best trial minimizes validation MSE.
pub fn random_search(
    space: &SearchSpace,
    budget: usize,
    train_series: &FrictionSeries,
    validation_series: &FrictionSeries,
    scv: ScvParams,
    config: &TrainConfig,
) -> Result<SearchResult, PinnError> {
    if budget == 0 {
        return Err(PinnError::Hyper("budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(FrictionNet, f64, usize)> = None;
    for index in 0..budget {
        let hp = space.sample(&mut rng);
        let samples = train_series.samples(hp.buffer_len, config.stride);
        let trial_cfg = TrainConfig {
            seed: config.seed.wrapping_add(1000 + index as u64),
            ..*config
        };
        let (net, _) = train(&hp, scv, &samples, &trial_cfg)?;
        let mse = validation_mse(&net, validation_series, config.stride)?;
        trials.push(Trial {
            index,
            hyperparameters: hp,
            validation_mse: mse,
        });
        if best.as_ref().is_none_or(|(_, b, _)| mse < *b) {
            best = Some((net, mse, index));
        }
    }
    let (best, _, best_trial) = best.unwrap();
    Ok(SearchResult {
        best,
        best_trial,
        trials,
    })
}

/// Trained nets keyed by joint name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrictionNetSet {
    pub version: u32,
    pub nets: BTreeMap<String, FrictionNet>,
}

/// Rolling velocity buffers feeding one net at run time.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityBuffer {
    motor: Vec<f64>,
    joint: Vec<f64>,
}

impl VelocityBuffer {
    pub fn new(len: usize) -> Self {
        Self {
            motor: vec![0.0; len],
            joint: vec![0.0; len],
        }
    }

    pub fn push(&mut self, motor_velocity: f64, joint_velocity: f64) {
        self.motor.rotate_left(1);
        self.joint.rotate_left(1);
        *self.motor.last_mut().unwrap() = motor_velocity;
        *self.joint.last_mut().unwrap() = joint_velocity;
    }

    pub fn predict(&self, net: &FrictionNet) -> Result<f64, PinnError> {
        net.predict(&self.motor, &self.joint)
    }
}
