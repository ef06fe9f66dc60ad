//! Rigid-body world: one grasped object, two kinematic arms with force
//! sensing at the pads, an optional peg hole.

pub mod arm;
pub mod config;
pub mod contact;
pub mod disturbance;
pub mod world;

pub use arm::{ArmModel, IkConfig, JointVec};
pub use config::{ArmsConfig, HoleConfig, ObjectConfig, PadConfig, SimConfig};
pub use contact::{ContactKind, ContactRecord};
pub use disturbance::{apply_disturbance, DisturbanceSpec};
pub use world::{ObjectState, World, WorldState};
