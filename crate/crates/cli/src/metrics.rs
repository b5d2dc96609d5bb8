//! Run logs and the metrics computed from them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use sensorless_sim::events::TimelineEntry;

use crate::ExperimentError;

/// One logged control period.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub com: [f64; 3],
    pub com_ref: [f64; 3],
    pub tau_d: Vec<f64>,
    /// Ground-truth joint torque.
    pub tau: Vec<f64>,
    /// Torque the loop was closed on, if any.
    pub feedback: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub joints: Vec<String>,
    pub has_feedback: bool,
    pub rows: Vec<LogRow>,
}

const AXES: [&str; 3] = ["x", "y", "z"];

impl RunLog {
    pub fn new(joints: Vec<String>, has_feedback: bool) -> Self {
        Self {
            joints,
            has_feedback,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: LogRow) -> Result<(), ExperimentError> {
        let n = self.joints.len();
        if row.tau_d.len() != n
            || row.tau.len() != n
            || row
                .feedback
                .as_ref()
                .map_or(self.has_feedback, |f| f.len() != n || !self.has_feedback)
        {
            return Err(ExperimentError::Schema(format!(
                "row at t = {} does not match the {n}-joint layout",
                row.t
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(AXES.iter().map(|a| format!("com_{a}")));
        h.extend(AXES.iter().map(|a| format!("ref_{a}")));
        for prefix in ["tau_d", "tau"] {
            h.extend(self.joints.iter().map(|j| format!("{prefix}:{j}")));
        }
        if self.has_feedback {
            h.extend(self.joints.iter().map(|j| format!("tau_fb:{j}")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| ExperimentError::Schema(e.to_string());
        w.write_record(self.header()).map_err(err)?;
        for r in &self.rows {
            let mut rec: Vec<String> = Vec::with_capacity(7 + 3 * self.joints.len());
            rec.push(r.t.to_string());
            rec.extend(
                r.com
                    .iter()
                    .chain(&r.com_ref)
                    .chain(&r.tau_d)
                    .chain(&r.tau)
                    .map(f64::to_string),
            );
            if let Some(f) = &r.feedback {
                rec.extend(f.iter().map(f64::to_string));
            }
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()
            .map_err(|e| ExperimentError::Schema(e.to_string()))
    }

    /// Parses a log written by [`Self::write_csv`]; any other column layout is
    /// a schema error.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, ExperimentError> {
        let mut r = csv::Reader::from_reader(input);
        let schema = |m: String| ExperimentError::Schema(m);
        let header: Vec<String> = r
            .headers()
            .map_err(|e| schema(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let joints: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("tau_d:").map(str::to_string))
            .collect();
        let has_feedback = header.iter().any(|h| h.starts_with("tau_fb:"));
        let mut log = Self::new(joints, has_feedback);
        if log.header() != header {
            return Err(schema(format!("unexpected columns {header:?}")));
        }
        let n = log.joints.len();
        for rec in r.records() {
            let rec = rec.map_err(|e| schema(e.to_string()))?;
            let v = rec
                .iter()
                .map(|x| x.parse::<f64>().map_err(|e| schema(format!("`{x}`: {e}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            if v.len() != header.len() {
                return Err(schema(format!(
                    "record with {} fields, expected {}",
                    v.len(),
                    header.len()
                )));
            }
            log.push(LogRow {
                t: v[0],
                com: [v[1], v[2], v[3]],
                com_ref: [v[4], v[5], v[6]],
                tau_d: v[7..7 + n].to_vec(),
                tau: v[7 + n..7 + 2 * n].to_vec(),
                feedback: has_feedback.then(|| v[7 + 2 * n..7 + 3 * n].to_vec()),
            })?;
        }
        Ok(log)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: impl IntoIterator<Item = f64>) -> Self {
        let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
        for e in errors {
            sq += e * e;
            abs += e.abs();
            n += 1;
        }
        if n == 0 {
            return Self::default();
        }
        let mse = sq / n as f64;
        Self {
            mse,
            rmse: mse.sqrt(),
            mae: abs / n as f64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub per_joint: Vec<ErrorStats>,
    /// Over all joints and samples.
    pub overall: ErrorStats,
}

impl TrackingMetrics {
    fn compute<'a>(
        rows: &[&'a LogRow],
        n: usize,
        pair: impl Fn(&'a LogRow) -> (&'a [f64], &'a [f64]),
    ) -> Self {
        let per_joint = (0..n)
            .map(|k| {
                ErrorStats::from_errors(rows.iter().map(|r| {
                    let (a, b) = pair(r);
                    a[k] - b[k]
                }))
            })
            .collect();
        let overall = ErrorStats::from_errors(rows.iter().flat_map(|r| {
            let (a, b) = pair(r);
            a.iter().zip(b).map(|(x, y)| x - y)
        }));
        Self { per_joint, overall }
    }
}

/// CoM tracking error over a time window, mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComWindow {
    pub start: f64,
    pub end: f64,
    /// Mean absolute error per axis.
    pub mean: [f64; 3],
    pub max: [f64; 3],
}

impl ComWindow {
    fn compute(rows: &[&LogRow], start: f64, end: f64) -> Option<Self> {
        let inside: Vec<&&LogRow> = rows.iter().filter(|r| r.t >= start && r.t < end).collect();
        if inside.is_empty() {
            return None;
        }
        let mut mean = [0.0; 3];
        let mut max = [0.0f64; 3];
        for r in &inside {
            for i in 0..3 {
                let e = 1e3 * (r.com[i] - r.com_ref[i]).abs();
                mean[i] += e;
                max[i] = max[i].max(e);
            }
        }
        mean.iter_mut().for_each(|m| *m /= inside.len() as f64);
        Some(Self {
            start,
            end,
            mean,
            max,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Samples inside the metrics window.
    pub samples: usize,
    /// Desired versus ground-truth joint torque, N·m.
    pub torque_tracking: TrackingMetrics,
    /// Feedback torque versus ground truth, N·m.
    pub feedback_error: Option<TrackingMetrics>,
    /// Before the first disturbance, or the whole window without any.
    pub com_before: Option<ComWindow>,
    pub com_after: Option<ComWindow>,
    /// Mean `|τ|` per joint, N·m.
    pub average_abs_torque: Vec<f64>,
    pub average_abs_torque_overall: f64,
    pub peak_abs_torque: f64,
    pub min_com_height: f64,
}

/// Metrics over the samples at or after `settle`.
pub fn compute_metrics(log: &RunLog, timeline: &[TimelineEntry], settle: f64) -> Metrics {
    let rows: Vec<&LogRow> = log.rows.iter().filter(|r| r.t >= settle).collect();
    let n = log.joints.len();
    let torque_tracking = TrackingMetrics::compute(&rows, n, |r| (&r.tau_d, &r.tau));
    let feedback_error = log.has_feedback.then(|| {
        TrackingMetrics::compute(&rows, n, |r| {
            (r.feedback.as_deref().unwrap_or(&r.tau), &r.tau)
        })
    });
    let end = rows.last().map_or(settle, |r| r.t + 1e-9);
    let first_event = timeline
        .iter()
        .map(|e| e.start)
        .fold(f64::INFINITY, f64::min);
    let (com_before, com_after) = if first_event.is_finite() {
        (
            ComWindow::compute(&rows, settle, first_event.max(settle)),
            ComWindow::compute(&rows, first_event.max(settle), end),
        )
    } else {
        (ComWindow::compute(&rows, settle, end), None)
    };
    let count = rows.len().max(1) as f64;
    let average_abs_torque: Vec<f64> = (0..n)
        .map(|k| rows.iter().map(|r| r.tau[k].abs()).sum::<f64>() / count)
        .collect();
    let average_abs_torque_overall = if n == 0 {
        0.0
    } else {
        average_abs_torque.iter().sum::<f64>() / n as f64
    };
    // Peak torque and lowest CoM cover the whole run, settling included.
    let peak_abs_torque = log
        .rows
        .iter()
        .flat_map(|r| r.tau.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let min_com_height = log
        .rows
        .iter()
        .map(|r| r.com[2])
        .fold(f64::INFINITY, f64::min);
    Metrics {
        samples: rows.len(),
        torque_tracking,
        feedback_error,
        com_before,
        com_after,
        average_abs_torque,
        average_abs_torque_overall,
        peak_abs_torque,
        min_com_height,
    }
}
