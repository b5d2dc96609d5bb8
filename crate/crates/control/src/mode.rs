//! The control configurations under comparison.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    Feedforward,
    #[serde(rename = "rnea-nocomp")]
    RneaNoComp,
    #[serde(rename = "ukf-nocomp")]
    UkfNoComp,
    FeedforwardPinn,
    RneaPinn,
    UkfPinn,
    #[serde(rename = "position")]
    PositionControl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackSource {
    None,
    Rnea,
    Ukf,
}

impl ControlMode {
    /// The six torque-control configurations, in report order.
    pub const TORQUE_MODES: [ControlMode; 6] = [
        ControlMode::Feedforward,
        ControlMode::RneaNoComp,
        ControlMode::UkfNoComp,
        ControlMode::FeedforwardPinn,
        ControlMode::RneaPinn,
        ControlMode::UkfPinn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Feedforward => "feedforward",
            Self::RneaNoComp => "rnea-nocomp",
            Self::UkfNoComp => "ukf-nocomp",
            Self::FeedforwardPinn => "feedforward-pinn",
            Self::RneaPinn => "rnea-pinn",
            Self::UkfPinn => "ukf-pinn",
            Self::PositionControl => "position",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Feedforward => "Feedforward",
            Self::RneaNoComp => "RNEA No Compensation",
            Self::UkfNoComp => "UKF No Compensation",
            Self::FeedforwardPinn => "Feedforward PINN",
            Self::RneaPinn => "RNEA-PINN",
            Self::UkfPinn => "UKF-PINN",
            Self::PositionControl => "Position control",
        }
    }

    pub fn feedback(self) -> FeedbackSource {
        match self {
            Self::RneaNoComp | Self::RneaPinn => FeedbackSource::Rnea,
            Self::UkfNoComp | Self::UkfPinn => FeedbackSource::Ukf,
            _ => FeedbackSource::None,
        }
    }

    /// Whether PINN friction is added to the current command.
    pub fn compensates_friction(self) -> bool {
        matches!(self, Self::FeedforwardPinn | Self::RneaPinn | Self::UkfPinn)
    }

    pub fn is_torque_mode(self) -> bool {
        self != Self::PositionControl
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = Self::TORQUE_MODES.iter().chain([&Self::PositionControl]);
        let key = s.to_ascii_lowercase().replace('_', "-");
        all.copied()
            .find(|m| m.name() == key)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in ControlMode::TORQUE_MODES
            .iter()
            .chain([&ControlMode::PositionControl])
        {
            assert_eq!(m.name().parse::<ControlMode>().unwrap(), *m);
            let json = serde_json::to_string(m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("ukf".parse::<ControlMode>().is_err());
    }

    #[test]
    fn wiring_table() {
        use ControlMode::*;
        let fb: Vec<_> = ControlMode::TORQUE_MODES
            .iter()
            .map(|m| m.feedback())
            .collect();
        assert_eq!(
            fb,
            [
                FeedbackSource::None,
                FeedbackSource::Rnea,
                FeedbackSource::Ukf,
                FeedbackSource::None,
                FeedbackSource::Rnea,
                FeedbackSource::Ukf
            ]
        );
        assert!(!RneaNoComp.compensates_friction() && RneaPinn.compensates_friction());
        assert!(!PositionControl.is_torque_mode());
    }
}
