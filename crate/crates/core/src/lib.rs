pub mod actuation;
pub mod ga;
pub mod kf_tuning;
pub mod pinn;
pub mod rbd;
pub mod ukf;
pub mod velocity_kf;
