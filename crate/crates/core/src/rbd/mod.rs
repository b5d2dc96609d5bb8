//! Floating-base rigid-body dynamics over a kinematic tree.
//!
//! Generalized velocities are `ν = [ᴮv_B; ᴮω_B; ṡ]` with the base twist in
//! base coordinates. Accelerations passed to and returned from the dynamics
//! are *proper* accelerations: the base block is `α − [ᴮR_A ᴬg; 0]`, so no
//! gravity term appears anywhere else.

mod dynamics;
mod kinematics;
mod model;
mod spatial;
mod urdf;

pub use dynamics::{
    coordinate_acceleration, forward_dynamics, kinetic_energy, mass_matrix, potential_energy,
    proper_acceleration, rnea, rnea_full, DynamicsTerms,
};
pub use kinematics::{
    center_of_mass, com_jacobian, forward_kinematics, frame_acceleration, frame_bias_acceleration,
    frame_jacobian, frame_pose, frame_velocity, link_states, Configuration, Contact,
};
pub use model::{
    BaseType, FrameRef, FrameSpec, Joint, JointSpec, JointType, Link, LinkSpec, RobotModel,
    SensorFrame, WORLD,
};
pub use spatial::{
    exp_so3, rpy_to_matrix, skew, SpatialForce, SpatialInertia, SpatialMotion, Transform,
};
pub use urdf::parse_model;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RbdError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u32, message: String },
    #[error("invalid model structure: {0}")]
    Structure(String),
    #[error("invalid model parameters: {0}")]
    Validation(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
