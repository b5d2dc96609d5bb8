//! Tables assembled from saved run reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::runner::{RunReport, ScalabilityReport};
use crate::ExperimentError;

/// Every `*.report.json` under `dir`, ordered by scenario, mode and seed.
pub fn load_reports(dir: &Path) -> Result<Vec<RunReport>, ExperimentError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut reports = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| ExperimentError::io(dir, e))?.path();
        if !path.to_string_lossy().ends_with(".report.json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
        reports.push(
            serde_json::from_str::<RunReport>(&text).map_err(|e| ExperimentError::io(&path, e))?,
        );
    }
    reports.sort_by(|a, b| {
        (&a.scenario, a.mode, a.seed, a.friction_scale.to_bits()).cmp(&(
            &b.scenario,
            b.mode,
            b.seed,
            b.friction_scale.to_bits(),
        ))
    });
    Ok(reports)
}

fn triple(v: [f64; 3], digits: usize) -> String {
    format!("[{:.d$}, {:.d$}, {:.d$}]", v[0], v[1], v[2], d = digits)
}

/// Markdown with a CoM table and a torque table, one row per run.
pub fn markdown(reports: &[RunReport]) -> String {
    let mut s = String::new();
    s.push_str("## CoM error before disturbances (mm, x/y/z)\n\n");
    s.push_str("| Scenario | Mode | Seed | Mean | Max | Upright |\n|---|---|---|---|---|---|\n");
    for r in reports {
        let (mean, max) = r
            .metrics
            .com_before
            .as_ref()
            .map_or(("n/a".into(), "n/a".into()), |c| {
                (triple(c.mean, 1), triple(c.max, 1))
            });
        let _ = writeln!(
            s,
            "| {} | {} | {} | {mean} | {max} | {} |",
            r.scenario,
            r.mode.label(),
            r.seed,
            yes_no(r.upright())
        );
    }
    s.push_str("\n## Torque tracking against ground truth (N·m)\n\n");
    s.push_str("| Scenario | Mode | Seed | MSE | RMSE | MAE | Feedback RMSE | Mean abs torque | Peak abs torque |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        let t = r.metrics.torque_tracking.overall;
        let fb = r
            .metrics
            .feedback_error
            .as_ref()
            .map_or("n/a".to_string(), |f| format!("{:.3}", f.overall.rmse));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {fb} | {:.2} | {:.1} |",
            r.scenario,
            r.mode.label(),
            r.seed,
            t.mse,
            t.rmse,
            t.mae,
            r.metrics.average_abs_torque_overall,
            r.metrics.peak_abs_torque
        );
    }
    let failed: Vec<&RunReport> = reports.iter().filter(|r| r.failed()).collect();
    if !failed.is_empty() {
        s.push_str("\n## Failed runs\n\n");
        for r in failed {
            let f = r.failure.as_ref().expect("filtered on failure");
            let _ = writeln!(
                s,
                "- {} / {} / seed {}: {} at {:.3} s",
                r.scenario,
                r.mode.name(),
                r.seed,
                f.reason,
                f.time
            );
        }
    }
    s
}

/// The metrics rows of all runs under one header.
pub fn summary_csv(reports: &[RunReport]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RunReport::METRICS_HEADER)
        .expect("in-memory write");
    for r in reports {
        w.write_record(r.metrics_record()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn scalability_markdown(report: &ScalabilityReport) -> String {
    let mut s = format!(
        "## Friction perturbation, {} (nominal RMSE {:.3} N·m)\n\n| Friction scale | Upright | Torque RMSE | Ratio to nominal |\n|---|---|---|---|\n",
        report.mode.label(),
        report.nominal.metrics.torque_tracking.overall.rmse
    );
    for e in &report.entries {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.2} |",
            e.friction_scale,
            yes_no(e.upright && !e.failed),
            e.tau_rmse,
            e.rmse_ratio
        );
    }
    s
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}
