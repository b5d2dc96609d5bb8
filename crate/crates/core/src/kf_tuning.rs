//! Multi-term smoothness/alignment objective for velocity-filter tuning.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::ga::{optimize, GaConfig, GaError, GaResult};
use crate::velocity_kf::{filter_trace, KfError, KfGains};

#[derive(Debug, thiserror::Error)]
pub enum TuningError {
    #[error("trace has {len} samples, need more than {needed}")]
    Data { len: usize, needed: usize },
    #[error("trace format: {0}")]
    Format(String),
    #[error(transparent)]
    Filter(#[from] KfError),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Encoder positions sampled at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTrace {
    pub dt: f64,
    pub positions: Vec<f64>,
    /// Reference velocity when known (synthetic traces), for reporting only.
    pub velocity: Option<Vec<f64>>,
}

impl EncoderTrace {
    /// Reads `t,position[,velocity]` rows with a header line.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, TuningError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut t = Vec::new();
        let mut x = Vec::new();
        let mut v = Vec::new();
        let has_velocity = rdr.headers()?.len() >= 3;
        for row in rdr.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64, TuningError> {
                row.get(i)
                    .ok_or_else(|| TuningError::Format(format!("missing column {i}")))?
                    .trim()
                    .parse()
                    .map_err(|e| TuningError::Format(format!("{e}")))
            };
            t.push(num(0)?);
            x.push(num(1)?);
            if has_velocity {
                v.push(num(2)?);
            }
        }
        if t.len() < 2 {
            return Err(TuningError::Data {
                len: t.len(),
                needed: 1,
            });
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(TuningError::Format("timestamps must increase".into()));
        }
        Ok(Self {
            dt,
            positions: x,
            velocity: has_velocity.then_some(v),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessSettings {
    /// Weights of (jerk, acceleration, alignment, integration consistency).
    pub weights: [f64; 4],
    /// Centered moving-average window for the alignment term, samples.
    pub window: usize,
    /// Samples discarded while the filter converges.
    pub burn_in: usize,
}

impl Default for FitnessSettings {
    fn default() -> Self {
        Self {
            weights: [1.0, 0.1, 10.0, 1.0],
            window: 25,
            burn_in: 1000,
        }
    }
}

/// Raw objective terms, all in rad².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessTerms {
    /// Mean of `(Δẍ̂ ΔT²)²`, i.e. jerk scaled to a position increment.
    pub jerk: f64,
    /// Mean of `(ẍ̂ ΔT²)²`.
    pub accel: f64,
    /// Mean square of the windowed average of `x̂ − z`.
    pub alignment: f64,
    /// Mean square one-step integration residual `x̂ₖ − (x̂ₖ₋₁ + ẋ̂ₖ₋₁ΔT + ẍ̂ₖ₋₁ΔT²/2)`.
    pub consistency: f64,
}

impl FitnessTerms {
    pub fn as_array(&self) -> [f64; 4] {
        [self.jerk, self.accel, self.alignment, self.consistency]
    }
}

pub fn fitness_terms(
    gains: &KfGains,
    trace: &EncoderTrace,
    r_meas: f64,
    settings: &FitnessSettings,
) -> Result<FitnessTerms, TuningError> {
    let n = trace.positions.len();
    let w = settings.window.max(1);
    let burn = settings.burn_in.min(n / 4).max(1);
    if n <= w + burn + 1 {
        return Err(TuningError::Data {
            len: n,
            needed: w + burn + 1,
        });
    }
    let est = filter_trace(trace.dt, gains, r_meas, &trace.positions)?;
    let dt2 = trace.dt * trace.dt;

    let mut err_prefix = Vec::with_capacity(n + 1);
    err_prefix.push(0.0);
    for (e, z) in est.iter().zip(&trace.positions) {
        err_prefix.push(err_prefix.last().unwrap() + (e[0] - z));
    }
    let half = w / 2;
    let (mut jerk, mut accel, mut align, mut cons) = (0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    let mut align_count = 0usize;
    for k in burn..n {
        let d = (est[k][2] - est[k - 1][2]) * dt2;
        jerk += d * d;
        let a = est[k][2] * dt2;
        accel += a * a;
        let p = &est[k - 1];
        let r = est[k][0] - (p[0] + p[1] * trace.dt + p[2] * 0.5 * dt2);
        cons += r * r;
        count += 1;
        if k >= half && k + w - half <= n {
            let lo = k - half;
            let m = (err_prefix[lo + w] - err_prefix[lo]) / w as f64;
            align += m * m;
            align_count += 1;
        }
    }
    let c = count as f64;
    Ok(FitnessTerms {
        jerk: jerk / c,
        accel: accel / c,
        alignment: align / align_count.max(1) as f64,
        consistency: cons / c,
    })
}

/// Weighted objective normalized by the measurement variance; higher is better.
pub fn kf_fitness(
    gains: &KfGains,
    trace: &EncoderTrace,
    r_meas: f64,
    settings: &FitnessSettings,
) -> Result<f64, TuningError> {
    let t = fitness_terms(gains, trace, r_meas, settings)?.as_array();
    let total: f64 = t.iter().zip(&settings.weights).map(|(t, w)| t * w).sum();
    Ok(-total / r_meas.max(f64::MIN_POSITIVE))
}

/// Default search box for `(log10 q_jerk, log10 q_accel)`.
pub fn default_gene_bounds() -> Vec<(f64, f64)> {
    vec![(-2.0, 8.0), (-8.0, 4.0)]
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub gains: KfGains,
    pub ga: GaResult,
}

pub fn tune_kf(
    trace: &EncoderTrace,
    r_meas: f64,
    settings: &FitnessSettings,
    config: &GaConfig,
) -> Result<TuneResult, TuningError> {
    // Surface data errors before spending the GA budget.
    fitness_terms(&KfGains::default(), trace, r_meas, settings)?;
    let ga = optimize(config, |genes, _| {
        kf_fitness(&KfGains::from_genes(genes), trace, r_meas, settings).unwrap_or(f64::NAN)
    })?;
    Ok(TuneResult {
        gains: KfGains::from_genes(&ga.best),
        ga,
    })
}
