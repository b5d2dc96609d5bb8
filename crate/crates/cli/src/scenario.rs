//! Scenario files: what happens to the robot during a run.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sensorless_control::balancer::ComReference;
use sensorless_sim::events::{self, ObjectAction, ObjectEvent, Push, TimelineEntry};
use sensorless_sim::humanoid;

use crate::ExperimentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        self as usize
    }
}

/// CoM reference relative to the CoM at the start of the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Hold,
    Sinusoid {
        axis: Axis,
        /// m
        amplitude: f64,
        /// Hz
        frequency: f64,
    },
}

impl Reference {
    pub fn at(&self, initial: &Vector3<f64>, t: f64) -> ComReference {
        let mut r = ComReference {
            position: *initial,
            ..Default::default()
        };
        if let Self::Sinusoid {
            axis,
            amplitude,
            frequency,
        } = *self
        {
            let w = std::f64::consts::TAU * frequency;
            let k = axis.index();
            r.position[k] += amplitude * (w * t).sin();
            r.velocity[k] = amplitude * w * (w * t).cos();
            r.acceleration[k] = -amplitude * w * w * (w * t).sin();
        }
        r
    }
}

/// Pushes drawn from the run seed: `count` horizontal pushes, one per equal
/// slot of `window`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPushes {
    pub count: [usize; 2],
    /// Force magnitude range, N.
    pub force: [f64; 2],
    /// Duration range, s.
    pub duration: [f64; 2],
    pub window: [f64; 2],
    pub frame: String,
    /// Heading range, degrees from +x towards +y.
    #[serde(default = "full_circle")]
    pub heading: [f64; 2],
    /// Flip each heading by 180 degrees with probability one half.
    #[serde(default)]
    pub mirror: bool,
}

fn full_circle() -> [f64; 2] {
    [0.0, 360.0]
}

impl RandomPushes {
    pub fn draw(&self, seed: u64) -> Vec<Push> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d157);
        let count = rng.random_range(self.count[0]..=self.count[1]);
        let slot = (self.window[1] - self.window[0]) / count as f64;
        (0..count)
            .map(|i| {
                let force = rng.random_range(self.force[0]..=self.force[1]);
                let duration = rng.random_range(self.duration[0]..=self.duration[1]);
                let mut heading = rng
                    .random_range(self.heading[0]..=self.heading[1])
                    .to_radians();
                if self.mirror && rng.random_bool(0.5) {
                    heading += std::f64::consts::PI;
                }
                let slack = (slot - duration).max(0.0);
                let start = self.window[0] + i as f64 * slot + rng.random_range(0.0..=slack * 0.5);
                Push {
                    start,
                    duration,
                    frame: self.frame.clone(),
                    force: [force * heading.cos(), force * heading.sin(), 0.0],
                    torque: [0.0; 3],
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let ordered = |r: [f64; 2]| r[0] >= 0.0 && r[0] <= r[1];
        if self.count[0] == 0
            || self.count[0] > self.count[1]
            || !ordered(self.force)
            || !ordered(self.duration)
            || !ordered(self.window)
            || !(self.heading[0] <= self.heading[1])
        {
            return Err(ExperimentError::Config(
                "random pushes need ordered, nonnegative ranges".into(),
            ));
        }
        let slot = (self.window[1] - self.window[0]) / self.count[1] as f64;
        if self.duration[1] > slot {
            return Err(ExperimentError::Config(format!(
                "{} pushes of up to {} s do not fit in the window",
                self.count[1], self.duration[1]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Simulated time, s.
    pub duration: f64,
    /// Samples before this time are left out of the metrics, s.
    #[serde(default = "default_settle")]
    pub settle: f64,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub pushes: Vec<Push>,
    #[serde(default)]
    pub random_pushes: Option<RandomPushes>,
    #[serde(default)]
    pub objects: Vec<ObjectEvent>,
    /// Multiplies the plant's friction parameters.
    #[serde(default = "one")]
    pub friction_scale: f64,
}

fn default_settle() -> f64 {
    1.0
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    fn base(name: &str, duration: f64) -> Self {
        Self {
            name: name.into(),
            duration,
            settle: default_settle(),
            reference: Reference::Hold,
            pushes: Vec::new(),
            random_pushes: None,
            objects: Vec::new(),
            friction_scale: 1.0,
        }
    }

    pub fn standing(duration: f64) -> Self {
        Self::base("standing", duration)
    }

    /// CoM swaying 2 cm forward and back at 0.3 Hz.
    pub fn sinusoid(duration: f64) -> Self {
        Self {
            reference: Reference::Sinusoid {
                axis: Axis::X,
                amplitude: 0.02,
                frequency: 0.3,
            },
            ..Self::base("sinusoid", duration)
        }
    }

    /// 4 to 8 random pushes of 10 to 40 N lasting 0.1 to 0.3 s, within 20
    /// degrees of sideways.
    pub fn disturbance(duration: f64) -> Self {
        Self {
            random_pushes: Some(RandomPushes {
                count: [4, 8],
                force: [10.0, 40.0],
                duration: [0.1, 0.3],
                window: [1.5, duration - 0.5],
                frame: humanoid::PUSH_FRAME.into(),
                heading: [70.0, 110.0],
                mirror: true,
            }),
            ..Self::base("disturbance", duration)
        }
    }

    /// A 6 cm box raised under the right sole, then lowered away.
    pub fn object_removal() -> Self {
        let foot = humanoid::SOLES[1].to_string();
        Self {
            objects: vec![
                ObjectEvent {
                    time: 0.2,
                    foot: foot.clone(),
                    height: 0.06,
                    action: ObjectAction::Insert,
                    ramp: 1.0,
                },
                ObjectEvent {
                    time: 3.0,
                    foot,
                    height: 0.06,
                    action: ObjectAction::Remove,
                    ramp: 1.0,
                },
            ],
            ..Self::base("object_removal", 6.0)
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let s: Self = serde_json::from_str(&text).map_err(|e| ExperimentError::io(path, e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.duration > 0.0) || !(self.settle >= 0.0) || self.settle >= self.duration {
            return Err(ExperimentError::Config(format!(
                "scenario `{}` needs 0 <= settle < duration",
                self.name
            )));
        }
        if !(self.friction_scale > 0.0) || !self.friction_scale.is_finite() {
            return Err(ExperimentError::Config(format!(
                "friction scale must be positive, got {}",
                self.friction_scale
            )));
        }
        if let Some(r) = &self.random_pushes {
            r.validate()?;
        }
        Ok(())
    }

    /// Fixed and seeded pushes together, ordered by start time.
    pub fn resolve_pushes(&self, seed: u64) -> Vec<Push> {
        let mut pushes = self.pushes.clone();
        if let Some(r) = &self.random_pushes {
            pushes.extend(r.draw(seed));
        }
        pushes.sort_by(|a, b| a.start.total_cmp(&b.start));
        pushes
    }

    pub fn timeline(&self, seed: u64) -> Vec<TimelineEntry> {
        let mut t = events::timeline(&self.resolve_pushes(seed), &self.objects);
        t.sort_by(|a, b| a.start.total_cmp(&b.start));
        t
    }
}
