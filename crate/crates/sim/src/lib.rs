pub mod config;
pub mod events;
pub mod humanoid;
pub mod plant;
pub mod rig;
