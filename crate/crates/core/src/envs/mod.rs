//! Task environments: cooperative handling and peg-in-hole assembly, both
//! stepped at the high rate with the impedance pipeline running at the inner
//! rate underneath.

pub mod assembly;
pub mod handling;
pub mod observation;
pub mod pipeline;
pub mod reward;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::World;

pub use assembly::{AssemblyEnv, AssemblyEnvConfig};
pub use handling::{HandlingEnv, HandlingEnvConfig};
pub use observation::{Observation, ObservationSpec};
pub use pipeline::{ControlPipeline, PipelineGraph, Task, Variant};
pub use reward::{AssemblyOutcome, AssemblyReward, HandlingReward};

/// Why an episode ended early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GraspLost,
    ContactForce,
    Success,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Index of the step just taken, zero-based.
    pub step: usize,
    /// Mean force-error norm per arm over the inner samples, N.
    pub force_error: [f64; 2],
    /// Smallest pad normal force at the end of the step, N.
    pub grasp_force: f64,
    /// Handling: distance to target. Assembly: remaining insertion, m.
    pub position_error: f64,
    /// Largest environment force magnitude over the inner samples, N.
    pub max_env_force: f64,
    pub depth: f64,
    pub termination: Option<Termination>,
    /// True when the step limit ended the episode.
    pub truncated: bool,
}

impl StepInfo {
    pub fn safety_violation(&self) -> bool {
        matches!(self.termination, Some(Termination::GraspLost | Termination::ContactForce))
    }

    pub fn success(&self) -> bool {
        self.termination == Some(Termination::Success)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// Episode over, for any reason.
    pub done: bool,
    /// Episode over because of the task, not the step limit. This is the
    /// flag that stops bootstrapping.
    pub terminal: bool,
    pub info: StepInfo,
}

/// One inner-rate sample, kept for trajectory dumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub object: [f64; 3],
    pub f1: [f64; 3],
    pub f2: [f64; 3],
    pub f_env: [f64; 3],
    pub depth: f64,
}

pub const TRACE_HEADER: &str =
    "step,time,object_x,object_y,object_z,f1x,f1y,f1z,f2x,f2y,f2z,fenv_x,fenv_y,fenv_z,depth";

impl TraceRow {
    pub fn csv(&self) -> String {
        let mut s = format!("{},{:.6}", self.step, self.time);
        for v in self.object.iter().chain(&self.f1).chain(&self.f2).chain(&self.f_env) {
            s.push_str(&format!(",{v:.9}"));
        }
        s.push_str(&format!(",{:.9}", self.depth));
        s
    }
}

/// Common surface of both tasks.
pub trait Environment {
    fn spec(&self) -> &ObservationSpec;
    fn action_dim(&self) -> usize;
    fn episode_len(&self) -> usize;
    fn reset(&mut self) -> Result<Observation>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
    fn world(&self) -> &World;
    fn world_mut(&mut self) -> &mut World;
    /// Turns inner-rate trace capture on or off; clears any trace.
    fn record_trace(&mut self, on: bool);
    fn take_trace(&mut self) -> Vec<TraceRow>;
}
