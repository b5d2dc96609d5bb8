//! Scheduled disturbances: timed wrenches and objects slid under a foot.

use serde::{Deserialize, Serialize};

/// A wrench applied at a frame origin during `[start, start + duration)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Push {
    pub start: f64,
    pub duration: f64,
    pub frame: String,
    /// World-frame force, N.
    pub force: [f64; 3],
    /// World-frame torque about the frame origin, N·m.
    #[serde(default)]
    pub torque: [f64; 3],
}

impl Push {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectAction {
    Insert,
    Remove,
}

/// A flat box under one sole. Insertion raises the box over `ramp` seconds
/// and removal lowers it over `ramp` seconds; a zero ramp is a step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectEvent {
    pub time: f64,
    /// Sole frame the object goes under.
    pub foot: String,
    pub height: f64,
    pub action: ObjectAction,
    #[serde(default = "default_ramp")]
    pub ramp: f64,
}

fn default_ramp() -> f64 {
    0.5
}

/// Entry of the run's event timeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub start: f64,
    pub end: f64,
    pub kind: String,
}

pub fn timeline(pushes: &[Push], objects: &[ObjectEvent]) -> Vec<TimelineEntry> {
    let mut out: Vec<TimelineEntry> = pushes
        .iter()
        .map(|p| TimelineEntry {
            start: p.start,
            end: p.start + p.duration,
            kind: format!("push@{}", p.frame),
        })
        .collect();
    out.extend(objects.iter().map(|o| TimelineEntry {
        start: o.time,
        end: o.time
            + match o.action {
                ObjectAction::Insert | ObjectAction::Remove => o.ramp,
            },
        kind: format!(
            "{}@{}",
            match o.action {
                ObjectAction::Insert => "object_insert",
                ObjectAction::Remove => "object_remove",
            },
            o.foot
        ),
    }));
    out.sort_by(|a, b| a.start.total_cmp(&b.start));
    out
}
