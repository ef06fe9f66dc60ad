//! Neural networks and soft actor-critic, written against a small scalar
//! trait so the same code runs in f32 for training and f64 for gradient
//! checks.

pub mod adam;
pub mod buffer;
pub mod checkpoint;
pub mod critic;
pub mod encoder;
pub mod lstm;
pub mod nn;
pub mod policy;
pub mod sac;
pub mod tensor;

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use encoder::{EncoderKind, ObsDims};
pub use sac::{AlphaMode, LossReport, SacAgent, SacConfig};
pub use tensor::{polyak_update, Parameterized, Real};
