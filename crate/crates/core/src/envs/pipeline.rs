//! The double-loop impedance pipeline between a desired object pose and the
//! arm servo commands, and its per-variant wiring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{decompose_wrench, internal_forces};
use crate::error::Result;
use crate::impedance::{apply_inner, apply_outer, ImpedanceFilter, ImpedanceParams};
use crate::rl::EncoderKind;
use crate::sim::world::grasp_targets;
use crate::sim::World;
use crate::{Transform, Vec3, Wrench};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Handling,
    Assembly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Lac,
    NoImp,
    FixedImp,
    NoLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Lac, Variant::NoImp, Variant::FixedImp, Variant::NoLstm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lac => "lac",
            Variant::NoImp => "no-imp",
            Variant::FixedImp => "fixed-imp",
            Variant::NoLstm => "no-lstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (lac, no-imp, fixed-imp, no-lstm)"))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Handling => "handling",
            Task::Assembly => "assembly",
        })
    }
}

/// Which blocks of the pipeline are live for a task and variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineGraph {
    pub inner_impedance: bool,
    pub outer_impedance: bool,
    /// The action carries six impedance parameters.
    pub learned_params: bool,
    pub encoder: EncoderKind,
    pub action_dim: usize,
}

impl PipelineGraph {
    pub fn build(task: Task, variant: Variant) -> Self {
        let filters = variant != Variant::NoImp;
        let learned = matches!(variant, Variant::Lac | Variant::NoLstm);
        Self {
            inner_impedance: filters,
            outer_impedance: filters && task == Task::Assembly,
            learned_params: learned,
            encoder: if variant == Variant::NoLstm {
                EncoderKind::Latest
            } else {
                EncoderKind::Lstm
            },
            action_dim: if learned { 9 } else { 3 },
        }
    }
}

/// Critically damped second-order smoothing of the desired object position,
/// run at the inner rate. The impulse response is non-negative, so the output
/// never moves further in one agent step than the input did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFilter {
    pub omega: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl ReferenceFilter {
    pub fn new(omega: f64, position: Vec3) -> Self {
        Self {
            omega,
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        }
    }

    pub fn reset(&mut self, position: Vec3) {
        *self = Self::new(self.omega, position);
    }

    pub fn step(&mut self, input: &Vec3, dt: f64) -> Vec3 {
        let w = self.omega;
        self.acceleration = (input - self.position) * (w * w) - self.velocity * (2.0 * w);
        self.velocity += self.acceleration * dt;
        self.position += self.velocity * dt;
        self.position
    }
}

/// Everything measured during one inner step, after the world advanced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSample {
    pub time: f64,
    /// Forces the end-effectors apply to the object.
    pub applied: [Vec3; 2],
    pub desired: [Vec3; 2],
    pub error: [Vec3; 2],
    pub env_force: Vec3,
    /// Smaller pad normal force.
    pub grasp_force: f64,
}

#[derive(Debug, Clone)]
pub struct ControlPipeline {
    pub graph: PipelineGraph,
    pub inner_params: ImpedanceParams,
    pub outer_params: ImpedanceParams,
    /// Internal force added along the grasp normal, N.
    pub squeeze: f64,
    inner: [ImpedanceFilter; 2],
    outer: ImpedanceFilter,
}

impl ControlPipeline {
    pub fn new(
        graph: PipelineGraph,
        dt: f64,
        squeeze: f64,
        inner_params: ImpedanceParams,
        outer_params: ImpedanceParams,
    ) -> Self {
        Self {
            graph,
            inner_params,
            outer_params,
            squeeze,
            inner: [ImpedanceFilter::new(dt), ImpedanceFilter::new(dt)],
            outer: ImpedanceFilter::new(dt),
        }
    }

    /// Clears the outer filter and primes each inner filter at the steady
    /// state matching the current pad squeeze, so the first command continues
    /// the reset pose instead of releasing the grasp.
    pub fn reset(&mut self, world: &World) {
        self.outer.reset();
        let r = world.state.object.pose.rotation;
        for i in 0..2 {
            let inward = -(r * world.pads[i].normal);
            let depth = world.state.pads[i].normal_force / world.cfg.pads.stiffness;
            let dx = inward * depth;
            let e = dx.component_mul(&self.inner_params.k_d);
            self.inner[i].prime(dx, e);
        }
    }

    /// Desired end-effector forces: the minimum-norm share of the inertial
    /// load, gravity and the measured environment wrench, plus the squeeze.
    pub fn desired_forces(&self, world: &World, accel: &Vec3) -> [Vec3; 2] {
        let r = world.state.object.pose.rotation;
        let grasp = world.grasp.expressed_in(&r);
        // The env wrench is already about the centroid; moving it to the
        // left-hand side avoids a second lever arm.
        let f_il = Wrench::from_force(accel * world.inertia.mass) - world.state.env_wrench;
        let (w1, w2) = decompose_wrench(&f_il, &Wrench::zero(), &world.inertia.gravity_wrench(), &grasp);
        let sq = internal_forces(&grasp, self.squeeze);
        [w1.force + sq[0], w2.force + sq[1]]
    }

    /// Servo commands for one inner step toward `desired_object`.
    pub fn commands(
        &mut self,
        world: &World,
        desired_object: &Transform,
        accel: &Vec3,
    ) -> ([Transform; 2], [Vec3; 2]) {
        let fd = self.desired_forces(world, accel);
        let mut x_o = *desired_object;
        if self.graph.outer_impedance {
            x_o.translation = apply_outer(
                &desired_object.translation,
                &world.state.env_wrench.force,
                &mut self.outer,
                &self.outer_params,
            );
        }
        let mut cmds = grasp_targets(&x_o, &world.grasp, 0.0);
        if self.graph.inner_impedance {
            for i in 0..2 {
                let measured = -world.state.sensed[i].force;
                let e = fd[i] - measured;
                cmds[i].translation = apply_inner(&cmds[i].translation, &e, &mut self.inner[i], &self.inner_params);
            }
        }
        (cmds, fd)
    }

    /// `accel` is the desired object acceleration, fed forward as the
    /// inertial wrench.
    pub fn substep(&mut self, world: &mut World, desired_object: &Transform, accel: &Vec3) -> Result<InnerSample> {
        let (cmds, desired) = self.commands(world, desired_object, accel);
        world.step(&cmds)?;
        Ok(sample(world, desired))
    }

    pub fn outer_adjustment(&self) -> Vec3 {
        self.outer.last_adjustment()
    }

    pub fn inner_adjustment(&self, arm: usize) -> Vec3 {
        self.inner[arm].last_adjustment()
    }
}

pub(crate) fn sample(world: &World, desired: [Vec3; 2]) -> InnerSample {
    let applied = [0, 1].map(|i| -world.state.sensed[i].force);
    InnerSample {
        time: world.state.time,
        applied,
        desired,
        error: [desired[0] - applied[0], desired[1] - applied[1]],
        env_force: world.state.env_wrench.force,
        grasp_force: world.state.pads[0].normal_force.min(world.state.pads[1].normal_force),
    }
}
