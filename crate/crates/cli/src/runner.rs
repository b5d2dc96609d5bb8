//! Closed-loop runs, sweeps over control modes and friction perturbations.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensorless_control::artifacts::Artifacts;
use sensorless_control::controller::{ClosedLoop, ControlConfig, Controller};
use sensorless_control::mode::ControlMode;
use sensorless_sim::config::PlantConfig;
use sensorless_sim::events::{Push, TimelineEntry};
use sensorless_sim::plant::Plant;

use crate::metrics::{compute_metrics, LogRow, Metrics, RunLog};
use crate::scenario::Scenario;
use crate::ExperimentError;

/// A run counts as a fall once the CoM drops below this fraction of its
/// starting height.
pub const FALL_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub time: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: ControlMode,
    pub seed: u64,
    pub friction_scale: f64,
    pub config_hash: String,
    /// Simulated time actually covered, s.
    pub simulated: f64,
    pub nominal_com_height: f64,
    pub failure: Option<Failure>,
    /// Pushes applied, random ones included.
    pub pushes: Vec<Push>,
    pub timeline: Vec<TimelineEntry>,
    pub metrics: Metrics,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Whether the CoM stayed above the fall threshold for the whole run.
    pub fn upright(&self) -> bool {
        self.metrics.min_com_height >= FALL_FRACTION * self.nominal_com_height
    }

    pub const METRICS_HEADER: [&'static str; 20] = [
        "scenario",
        "mode",
        "seed",
        "friction_scale",
        "config_hash",
        "upright",
        "failure_time",
        "tau_mse",
        "tau_rmse",
        "tau_mae",
        "feedback_rmse",
        "com_mean_x_mm",
        "com_mean_y_mm",
        "com_mean_z_mm",
        "com_max_x_mm",
        "com_max_y_mm",
        "com_max_z_mm",
        "avg_abs_tau",
        "peak_abs_tau",
        "min_com_z",
    ];

    pub fn metrics_record(&self) -> Vec<String> {
        let m = &self.metrics;
        let t = m.torque_tracking.overall;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let com = m.com_before.as_ref();
        let mut rec = vec![
            self.scenario.clone(),
            self.mode.name().to_string(),
            self.seed.to_string(),
            self.friction_scale.to_string(),
            self.config_hash.clone(),
            self.upright().to_string(),
            opt(self.failure.as_ref().map(|f| f.time)),
            t.mse.to_string(),
            t.rmse.to_string(),
            t.mae.to_string(),
            opt(m.feedback_error.as_ref().map(|f| f.overall.rmse)),
        ];
        for i in 0..3 {
            rec.push(opt(com.map(|c| c.mean[i])));
        }
        for i in 0..3 {
            rec.push(opt(com.map(|c| c.max[i])));
        }
        rec.push(m.average_abs_torque_overall.to_string());
        rec.push(m.peak_abs_torque.to_string());
        rec.push(m.min_com_height.to_string());
        rec
    }

    /// Header plus this run's row.
    pub fn metrics_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::METRICS_HEADER)
            .expect("in-memory write");
        w.write_record(self.metrics_record())
            .expect("in-memory write");
        w.into_inner().expect("in-memory flush")
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: RunLog,
    pub report: RunReport,
}

/// Everything besides the scenario and seed that a run depends on.
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub plant: PlantConfig,
    pub control: ControlConfig,
    pub artifacts: Artifacts,
}

impl RunSetup {
    pub fn standard(mode: ControlMode, artifacts: Artifacts) -> Self {
        Self {
            plant: PlantConfig::default(),
            control: ControlConfig::standard(mode),
            artifacts,
        }
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    scenario: &'a Scenario,
    plant: &'a PlantConfig,
    control: &'a ControlConfig,
    artifacts: &'a Artifacts,
}

/// SHA-256 over the canonical JSON of everything a run is built from.
pub fn config_hash(scenario: &Scenario, setup: &RunSetup) -> String {
    let json = serde_json::to_vec(&HashInput {
        scenario,
        plant: &setup.plant,
        control: &setup.control,
        artifacts: &setup.artifacts,
    })
    .expect("configuration serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn run_scenario(
    scenario: &Scenario,
    setup: &RunSetup,
    seed: u64,
) -> Result<RunOutput, ExperimentError> {
    scenario.validate()?;
    let mode = setup.control.mode;
    let plant_config = PlantConfig {
        seed,
        friction_scale: setup.plant.friction_scale * scenario.friction_scale,
        ..setup.plant.clone()
    };
    let mut plant = Plant::from_config(plant_config)?;
    let pushes = scenario.resolve_pushes(seed);
    for p in &pushes {
        plant.apply_disturbance(p.clone())?;
    }
    for o in &scenario.objects {
        plant.object_event(o.clone())?;
    }
    let model = plant.model().clone();
    let motors = plant.actuators().iter().map(|a| a.motor).collect();
    let controller = Controller::new(
        Arc::clone(&model),
        motors,
        setup.control.clone(),
        &setup.artifacts,
    )?;
    let mut cl = ClosedLoop::new(plant, controller)?;
    let com0 = cl.current_sample()?.1.com;
    let period = 1.0 / setup.control.rates.low_hz;
    let steps = (scenario.duration / period).round() as usize;
    let joints: Vec<String> = model.joint_names().iter().map(|s| s.to_string()).collect();
    let mut log = RunLog::new(
        joints,
        mode.feedback() != sensorless_control::mode::FeedbackSource::None,
    );
    let mut failure = None;
    for k in 0..steps {
        let t = k as f64 * period;
        let reference = scenario.reference.at(&com0, t);
        let rec = match cl.tick(&reference) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(Failure {
                    time: t,
                    reason: e.to_string(),
                });
                break;
            }
        };
        log.push(LogRow {
            t: rec.truth.t,
            com: rec.truth.com.into(),
            com_ref: reference.position.into(),
            tau_d: rec.command.tau_d.as_slice().to_vec(),
            tau: rec.truth.tau.as_slice().to_vec(),
            feedback: rec
                .command
                .tau_feedback
                .as_ref()
                .map(|f| f.as_slice().to_vec()),
        })?;
        if rec.truth.com.z < FALL_FRACTION * com0.z {
            failure = Some(Failure {
                time: rec.truth.t,
                reason: "fell".into(),
            });
            break;
        }
    }
    let timeline = scenario.timeline(seed);
    let metrics = compute_metrics(&log, &timeline, scenario.settle);
    let report = RunReport {
        scenario: scenario.name.clone(),
        mode,
        seed,
        friction_scale: scenario.friction_scale * setup.plant.friction_scale,
        config_hash: config_hash(scenario, setup),
        simulated: log.rows.last().map_or(0.0, |r| r.t),
        nominal_com_height: com0.z,
        failure,
        pushes,
        timeline,
        metrics,
    };
    Ok(RunOutput { log, report })
}

/// Runs every mode on its own thread; results come back in `modes` order.
pub fn sweep(
    scenario: &Scenario,
    modes: &[ControlMode],
    seed: u64,
    artifacts: &Artifacts,
) -> Vec<Result<RunOutput, ExperimentError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&mode| {
                s.spawn(move || {
                    run_scenario(scenario, &RunSetup::standard(mode, artifacts.clone()), seed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityEntry {
    pub friction_scale: f64,
    pub upright: bool,
    pub failed: bool,
    pub tau_rmse: f64,
    /// RMSE over the nominal plant's RMSE.
    pub rmse_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityReport {
    pub mode: ControlMode,
    pub nominal: RunReport,
    pub entries: Vec<ScalabilityEntry>,
    pub runs: Vec<RunReport>,
}

/// Runs the same controller and artifacts on plants whose friction is scaled.
pub fn scalability_sweep(
    scenario: &Scenario,
    mode: ControlMode,
    scales: &[f64],
    seed: u64,
    artifacts: &Artifacts,
) -> Result<ScalabilityReport, ExperimentError> {
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(ExperimentError::Config(format!(
            "friction scale must be positive, got {s}"
        )));
    }
    let mut all = vec![1.0];
    all.extend_from_slice(scales);
    let runs: Vec<RunReport> = std::thread::scope(|s| {
        let handles: Vec<_> = all
            .iter()
            .map(|&scale| {
                s.spawn(move || {
                    let scaled = Scenario {
                        friction_scale: scenario.friction_scale * scale,
                        ..scenario.clone()
                    };
                    run_scenario(&scaled, &RunSetup::standard(mode, artifacts.clone()), seed)
                        .map(|o| o.report)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect::<Result<_, _>>()
    })?;
    let nominal = runs[0].clone();
    let base = nominal.metrics.torque_tracking.overall.rmse;
    let entries = scales
        .iter()
        .zip(&runs[1..])
        .map(|(&scale, r)| ScalabilityEntry {
            friction_scale: scale,
            upright: r.upright(),
            failed: r.failed(),
            tau_rmse: r.metrics.torque_tracking.overall.rmse,
            rmse_ratio: r.metrics.torque_tracking.overall.rmse / base,
        })
        .collect();
    Ok(ScalabilityReport {
        mode,
        nominal,
        entries,
        runs: runs[1..].to_vec(),
    })
}

/// File stem for a run's outputs.
pub fn run_stem(report: &RunReport) -> String {
    format!(
        "{}_{}_seed{}",
        report.scenario,
        report.mode.name(),
        report.seed
    )
}

/// Writes `<stem>.csv` (log), `<stem>.report.json` and `<stem>.metrics.csv`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let stem = run_stem(&out.report);
    let log_path = dir.join(format!("{stem}.csv"));
    let file = std::fs::File::create(&log_path).map_err(|e| ExperimentError::io(&log_path, e))?;
    out.log.write_csv(std::io::BufWriter::new(file))?;
    let report_path = dir.join(format!("{stem}.report.json"));
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
    std::fs::write(&report_path, json).map_err(|e| ExperimentError::io(&report_path, e))?;
    let metrics_path = dir.join(format!("{stem}.metrics.csv"));
    std::fs::write(&metrics_path, out.report.metrics_csv())
        .map_err(|e| ExperimentError::io(&metrics_path, e))?;
    Ok(())
}

/// Loads artifacts, naming the path when it is missing.
pub fn load_artifacts(path: &Path) -> Result<Artifacts, ExperimentError> {
    if !path.exists() {
        return Err(ExperimentError::Config(format!(
            "artifact file `{}` not found; create it with the `train` command",
            path.display()
        )));
    }
    Ok(Artifacts::load(path)?)
}
