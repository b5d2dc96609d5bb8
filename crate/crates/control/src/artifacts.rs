//! Trained estimator parameters: velocity-filter gains and friction networks,
//! and the pipeline that produces them from single-joint bench recordings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sensorless_core::ga::GaConfig;
use sensorless_core::kf_tuning::{default_gene_bounds, tune_kf, EncoderTrace, FitnessSettings};
use sensorless_core::pinn::{self, FrictionNetSet, FrictionSeries, Hyperparameters, TrainConfig};
use sensorless_core::velocity_kf::{encoder_lsb, filter_trace, quantization_variance, KfGains};
use sensorless_sim::config::ActuatorConfig;
use sensorless_sim::rig::{run_rig, RigConfig, RigLog};

use crate::estimation::KfBankGains;
use crate::ControlError;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub version: u32,
    pub kf: KfBankGains,
    pub pinn: FrictionNetSet,
}

impl Artifacts {
    pub fn load(path: &Path) -> Result<Self, ControlError> {
        let err = |message: String| ControlError::Artifact {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let a: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if a.version != ARTIFACT_VERSION {
            return Err(err(format!("unsupported version {}", a.version)));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<(), ControlError> {
        let text = serde_json::to_string_pretty(self).expect("artifacts serialize");
        std::fs::write(path, text).map_err(|e| ControlError::Artifact {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    /// Bench recording length, s.
    pub rig_duration: f64,
    /// Fraction of the recording used for training; the rest is held out.
    pub train_fraction: f64,
    pub joint_encoder_bits: u32,
    pub motor_encoder_bits: u32,
    pub ga_population: usize,
    pub ga_generations: usize,
    pub fitness: FitnessSettings,
    pub hyperparameters: Hyperparameters,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            rig_duration: 60.0,
            train_fraction: 0.8,
            joint_encoder_bits: 12,
            motor_encoder_bits: 16,
            ga_population: 40,
            ga_generations: 15,
            fitness: FitnessSettings::default(),
            hyperparameters: Hyperparameters::default(),
            train: TrainConfig {
                steps: 4000,
                seed: 0,
                stride: 1,
            },
            seed: 0,
        }
    }
}

/// Intermediate products kept for inspection and tests.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub artifacts: Artifacts,
    pub rig: RigLog,
    /// Filtered-velocity series split into training and held-out parts.
    pub train: FrictionSeries,
    pub held_out: FrictionSeries,
    pub losses: Vec<f64>,
}

/// Velocity filters driven by the bench encoders, in joint-side units.
pub fn filtered_series(
    log: &RigLog,
    gains: &KfBankGains,
    settings: &PipelineSettings,
    ratio: f64,
) -> Result<FrictionSeries, ControlError> {
    let rj = quantization_variance(encoder_lsb(settings.joint_encoder_bits));
    let rm = quantization_variance(encoder_lsb(settings.motor_encoder_bits) / ratio);
    let motor: Vec<f64> = log.motor_encoder.iter().map(|x| x / ratio).collect();
    let j = filter_trace(log.dt, &gains.joint, rj, &log.joint_encoder)?;
    let m = filter_trace(log.dt, &gains.motor, rm, &motor)?;
    let mut s = FrictionSeries::default();
    for k in 0..log.len() {
        s.push(m[k][1], j[k][1], log.friction[k]);
    }
    Ok(s)
}

pub fn tune_bank(
    log: &RigLog,
    settings: &PipelineSettings,
    ratio: f64,
) -> Result<KfBankGains, ControlError> {
    let cfg = |offset: u64| GaConfig {
        population_size: settings.ga_population,
        generations: settings.ga_generations,
        parents_mating: (settings.ga_population / 2).max(1),
        ..GaConfig::new(default_gene_bounds(), settings.seed.wrapping_add(offset))
    };
    let tune = |positions: Vec<f64>, r: f64, offset: u64| -> Result<KfGains, ControlError> {
        let trace = EncoderTrace {
            dt: log.dt,
            positions,
            velocity: None,
        };
        tune_kf(&trace, r, &settings.fitness, &cfg(offset))
            .map(|t| t.gains)
            .map_err(|e| ControlError::Config(format!("filter tuning failed: {e}")))
    };
    let rj = quantization_variance(encoder_lsb(settings.joint_encoder_bits));
    let rm = quantization_variance(encoder_lsb(settings.motor_encoder_bits) / ratio);
    Ok(KfBankGains {
        joint: tune(log.joint_encoder.clone(), rj, 1)?,
        motor: tune(log.motor_encoder.iter().map(|x| x / ratio).collect(), rm, 2)?,
    })
}

/// Records the bench, tunes the filters and trains one network per distinct
/// actuator; every joint using that actuator shares its network.
pub fn build_artifacts(
    joints: &[(String, ActuatorConfig)],
    settings: &PipelineSettings,
) -> Result<PipelineOutput, ControlError> {
    if joints.is_empty() {
        return Err(ControlError::Config("no joints to train for".into()));
    }
    let mut distinct: Vec<ActuatorConfig> = Vec::new();
    for (_, a) in joints {
        if !distinct.contains(a) {
            distinct.push(*a);
        }
    }
    let mut nets = BTreeMap::new();
    let mut first: Option<(
        KfBankGains,
        RigLog,
        FrictionSeries,
        FrictionSeries,
        Vec<f64>,
    )> = None;
    for (index, actuator) in distinct.iter().enumerate() {
        let mut rig = RigConfig::multisine(
            *actuator,
            settings.rig_duration,
            settings.seed.wrapping_add(index as u64),
        );
        rig.noise.joint_encoder_bits = settings.joint_encoder_bits;
        rig.noise.motor_encoder_bits = settings.motor_encoder_bits;
        let log = run_rig(&rig);
        let ratio = actuator.motor.ratio;
        // Filter gains are tuned once, on the first actuator's recording.
        let gains = match &first {
            Some((g, ..)) => *g,
            None => tune_bank(&log, settings, ratio)?,
        };
        let series = filtered_series(&log, &gains, settings, ratio)?;
        let (train, held_out) = series.split(settings.train_fraction);
        let samples = train.samples(settings.hyperparameters.buffer_len, settings.train.stride);
        let (net, losses) = pinn::train(
            &settings.hyperparameters,
            actuator.friction,
            &samples,
            &settings.train,
        )?;
        for (name, a) in joints {
            if a == actuator {
                nets.insert(name.clone(), net.clone());
            }
        }
        if first.is_none() {
            first = Some((gains, log, train, held_out, losses));
        }
    }
    let (kf, rig, train, held_out, losses) = first.expect("at least one actuator");
    Ok(PipelineOutput {
        artifacts: Artifacts {
            version: ARTIFACT_VERSION,
            kf,
            pinn: FrictionNetSet { version: 1, nets },
        },
        rig,
        train,
        held_out,
        losses,
    })
}
