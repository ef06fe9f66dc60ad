//! Learning-based adaptive compliance for dual-arm closed-chain manipulation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod envs;
pub mod error;
pub mod harness;
pub mod impedance;
pub mod math;
pub mod rl;
pub mod sim;

pub use error::{LacError, Result};
pub use math::{Transform, Vec3, Wrench};
