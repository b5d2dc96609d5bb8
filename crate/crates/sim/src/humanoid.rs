//! The bundled desk-scale biped and its named frames.

use nalgebra::{DVector, Vector3};
use sensorless_core::rbd::{self, parse_model, Configuration, RbdError, RobotModel, Transform};

pub const URDF: &str = include_str!("../assets/humanoid.urdf");

pub const JOINTS: [&str; 12] = [
    "l_hip_roll",
    "l_hip_pitch",
    "l_knee",
    "l_ankle_pitch",
    "l_ankle_roll",
    "r_hip_roll",
    "r_hip_pitch",
    "r_knee",
    "r_ankle_pitch",
    "r_ankle_roll",
    "torso_pitch",
    "torso_roll",
];

pub const SOLES: [&str; 2] = ["l_sole", "r_sole"];
pub const IMUS: [&str; 3] = ["waist_imu", "l_foot_imu", "r_foot_imu"];
pub const WAIST_IMU: &str = "waist_imu";
pub const PUSH_FRAME: &str = "torso";

/// Sole rectangle, m (length along x, width along y).
pub const FOOT_LENGTH: f64 = 0.16;
pub const FOOT_WIDTH: f64 = 0.08;

pub fn model() -> RobotModel {
    parse_model(URDF).expect("bundled model is valid")
}

/// Same robot with the pelvis welded to the world.
pub fn fixed_base_model() -> RobotModel {
    parse_model(&URDF.replace(
        r#"name="root" type="floating""#,
        r#"name="root" type="fixed""#,
    ))
    .expect("bundled model is valid")
}

/// Half-squat posture used as the balancing set point.
pub fn nominal_joint_positions(model: &RobotModel) -> DVector<f64> {
    let mut s = DVector::zeros(model.dof());
    for (name, value) in [
        ("l_hip_pitch", -0.6),
        ("l_knee", 1.2),
        ("l_ankle_pitch", -0.6),
        ("r_hip_pitch", -0.6),
        ("r_knee", 1.2),
        ("r_ankle_pitch", -0.6),
    ] {
        if let Some(i) = model.dof_index(name) {
            s[i] = value;
        }
    }
    s
}

/// Nominal posture with the pelvis placed so both soles rest at `z = -preload`.
pub fn standing_configuration(model: &RobotModel, preload: f64) -> Result<Configuration, RbdError> {
    let s = nominal_joint_positions(model);
    let q = Configuration::new(Transform::identity(), s);
    let left = rbd::frame_pose(model, &q, &model.frame(SOLES[0])?);
    let right = rbd::frame_pose(model, &q, &model.frame(SOLES[1])?);
    let mid = (left.translation + right.translation) * 0.5;
    let base = Transform::new(
        nalgebra::Matrix3::identity(),
        Vector3::new(-mid.x, 0.0, -mid.z - preload),
    );
    Ok(Configuration::new(base, q.s))
}
