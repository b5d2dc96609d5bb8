use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sensorless_control::artifacts::{build_artifacts, PipelineSettings};
use sensorless_control::mode::ControlMode;
use sensorless_experiments::report::{load_reports, markdown, scalability_markdown, summary_csv};
use sensorless_experiments::runner::{
    load_artifacts, run_scenario, scalability_sweep, sweep, write_run, RunOutput, RunSetup,
};
use sensorless_experiments::scenario::Scenario;
use sensorless_experiments::ExperimentError;
use sensorless_sim::config::PlantConfig;
use sensorless_sim::humanoid;

#[derive(Parser)]
#[command(
    name = "sensorless",
    about = "Balancing experiments on the simulated biped"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record the actuator bench, tune the velocity filters and train the friction networks.
    Train {
        #[arg(long, default_value = "artifacts.json")]
        out: PathBuf,
        /// Bench recording length, s.
        #[arg(long, default_value_t = 60.0)]
        rig_duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One scenario under one control mode.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        mode: ControlMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "artifacts.json")]
        artifacts: PathBuf,
    },
    /// One scenario under several modes, in parallel.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated mode names, or `all` for the six torque modes.
        #[arg(long, default_value = "all")]
        modes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "artifacts.json")]
        artifacts: PathBuf,
    },
    /// One mode on plants with scaled friction, without retraining.
    Scalability {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "ukf-pinn")]
        mode: ControlMode,
        /// Comma-separated friction scales.
        #[arg(long, default_value = "0.7,1.3")]
        scales: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "artifacts.json")]
        artifacts: PathBuf,
    },
    /// Markdown and CSV tables from the reports in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_modes(text: &str) -> Result<Vec<ControlMode>, ExperimentError> {
    let mut modes = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            modes.extend(ControlMode::TORQUE_MODES);
        } else {
            modes.push(
                part.parse()
                    .map_err(|e| ExperimentError::Config(format!("{e}")))?,
            );
        }
    }
    modes.dedup();
    if modes.is_empty() {
        return Err(ExperimentError::Config("no modes given".into()));
    }
    Ok(modes)
}

fn parse_scales(text: &str) -> Result<Vec<f64>, ExperimentError> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| ExperimentError::Config(format!("scale `{p}`: {e}")))
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    std::fs::write(path, bytes).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn summarize(out: &RunOutput) -> bool {
    let r = &out.report;
    let t = r.metrics.torque_tracking.overall;
    match &r.failure {
        None => println!(
            "{:<16} torque RMSE {:.3} N·m, peak |τ| {:.1} N·m",
            r.mode.name(),
            t.rmse,
            r.metrics.peak_abs_torque
        ),
        Some(f) => println!(
            "{:<16} FAILED ({} at {:.3} s), torque RMSE {:.3} N·m",
            r.mode.name(),
            f.reason,
            f.time,
            t.rmse
        ),
    }
    !r.failed()
}

fn execute(cli: Cli) -> Result<bool, ExperimentError> {
    match cli.command {
        Command::Train {
            out,
            rig_duration,
            seed,
        } => {
            let plant = PlantConfig::default();
            let joints: Vec<_> = humanoid::JOINTS
                .iter()
                .map(|j| (j.to_string(), plant.actuator_for(j)))
                .collect();
            let settings = PipelineSettings {
                rig_duration,
                seed,
                ..PipelineSettings::default()
            };
            let built = build_artifacts(&joints, &settings)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io {
                    path: dir.display().to_string(),
                    message: e.to_string(),
                })?;
            }
            built.artifacts.save(&out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Run {
            scenario,
            mode,
            seed,
            out,
            artifacts,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let artifacts = load_artifacts(&artifacts)?;
            let run = run_scenario(&scenario, &RunSetup::standard(mode, artifacts), seed)?;
            write_run(&out, &run)?;
            Ok(summarize(&run))
        }
        Command::Sweep {
            scenario,
            modes,
            seed,
            out,
            artifacts,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let artifacts = load_artifacts(&artifacts)?;
            let modes = parse_modes(&modes)?;
            let mut ok = true;
            for run in sweep(&scenario, &modes, seed, &artifacts) {
                let run = run?;
                write_run(&out, &run)?;
                ok &= summarize(&run);
            }
            Ok(ok)
        }
        Command::Scalability {
            scenario,
            mode,
            scales,
            seed,
            out,
            artifacts,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let artifacts = load_artifacts(&artifacts)?;
            let report =
                scalability_sweep(&scenario, mode, &parse_scales(&scales)?, seed, &artifacts)?;
            std::fs::create_dir_all(&out).map_err(|e| ExperimentError::Io {
                path: out.display().to_string(),
                message: e.to_string(),
            })?;
            let md = scalability_markdown(&report);
            write_file(&out.join("scalability.md"), md.as_bytes())?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_file(&out.join("scalability.json"), json.as_bytes())?;
            print!("{md}");
            Ok(report.entries.iter().all(|e| e.upright && !e.failed))
        }
        Command::Report { input } => {
            let reports = load_reports(&input)?;
            if reports.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "no run reports in `{}`",
                    input.display()
                )));
            }
            let md = markdown(&reports);
            write_file(&input.join("report.md"), md.as_bytes())?;
            write_file(&input.join("summary.csv"), &summary_csv(&reports))?;
            print!("{md}");
            Ok(reports.iter().all(|r| !r.failed()))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
