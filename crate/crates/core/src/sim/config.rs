use serde::{Deserialize, Serialize};

use super::arm::IkConfig;
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Inner-loop period, s.
    pub dt: f64,
    pub gravity: [f64; 3],
    pub object: ObjectConfig,
    pub pads: PadConfig,
    pub arms: ArmsConfig,
    pub hole: HoleConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            gravity: [0.0, 0.0, -9.81],
            object: ObjectConfig::default(),
            pads: PadConfig::default(),
            arms: ArmsConfig::default(),
            hole: HoleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectConfig {
    pub mass: f64,
    pub half_extents: [f64; 3],
    /// Nominal centroid position for the handling task.
    pub nominal_position: [f64; 3],
    pub peg_radius: f64,
    /// Peg length beyond the +x face.
    pub peg_length: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            mass: 2.0,
            half_extents: [0.1, 0.1, 0.1],
            nominal_position: [0.4, 0.0, 0.3],
            peg_radius: 0.015,
            peg_length: 0.08,
        }
    }
}

impl ObjectConfig {
    /// Peg tip in the object frame.
    pub fn peg_tip(&self) -> Vec3 {
        Vec3::new(self.half_extents[0] + self.peg_length, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PadConfig {
    pub stiffness: f64,
    pub damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    pub torsional_stiffness: f64,
    pub torsional_damping: f64,
    pub friction: f64,
    /// Effective radius for the torsional friction cap.
    pub radius: f64,
    /// Normal force below which a pad counts as detached, N.
    pub detach_threshold: f64,
    /// Consecutive detached inner steps tolerated before the grasp is lost.
    pub dwell_steps: usize,
    /// Largest anchor slide from the nominal grasp point before the object
    /// is considered dropped.
    pub max_slip: f64,
    /// Normal force applied at reset, N.
    pub preload: f64,
}

impl Default for PadConfig {
    fn default() -> Self {
        Self {
            stiffness: 20_000.0,
            damping: 100.0,
            tangential_stiffness: 20_000.0,
            tangential_damping: 100.0,
            torsional_stiffness: 200.0,
            torsional_damping: 1.0,
            friction: 1.5,
            radius: 0.03,
            detach_threshold: 1.0,
            dwell_steps: 5,
            max_slip: 0.03,
            preload: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmsConfig {
    pub base_positions: [[f64; 3]; 2],
    pub tool_length: f64,
    /// Per-axis Cartesian rate limit, m/s.
    pub max_linear_rate: f64,
    /// Angular rate limit, rad/s.
    pub max_angular_rate: f64,
    /// Position-servo stiffness used to turn a disturbance wrench into an
    /// end-effector offset, N/m.
    pub servo_stiffness: f64,
    pub ik: IkConfig,
}

impl Default for ArmsConfig {
    fn default() -> Self {
        Self {
            base_positions: [[0.0, 0.4, 0.0], [0.0, -0.4, 0.0]],
            tool_length: 0.05,
            max_linear_rate: 0.5,
            max_angular_rate: 2.0,
            servo_stiffness: 5_000.0,
            ik: IkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoleConfig {
    /// Entry-plane centre of the hole.
    pub center: [f64; 3],
    /// Insertion direction.
    pub axis: [f64; 3],
    pub radius: f64,
    pub depth: f64,
    pub chamfer: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    /// Tangential speed below which friction is viscous, m/s.
    pub friction_smoothing: f64,
}

impl Default for HoleConfig {
    fn default() -> Self {
        Self {
            center: [0.6, 0.0, 0.3],
            axis: [1.0, 0.0, 0.0],
            radius: 0.0155,
            depth: 0.05,
            chamfer: 0.003,
            stiffness: 10_000.0,
            damping: 50.0,
            friction: 0.3,
            friction_smoothing: 1e-3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        pos(self.dt, "sim.dt")?;
        pos(self.object.mass, "sim.object.mass")?;
        for h in self.object.half_extents {
            pos(h, "sim.object.half_extents")?;
        }
        pos(self.object.peg_radius, "sim.object.peg_radius")?;
        pos(self.pads.stiffness, "sim.pads.stiffness")?;
        if !(self.pads.friction > 0.0 && self.pads.friction <= 2.0) {
            return Err(format!("sim.pads.friction must lie in (0, 2], got {}", self.pads.friction));
        }
        pos(self.arms.max_linear_rate, "sim.arms.max_linear_rate")?;
        pos(self.arms.servo_stiffness, "sim.arms.servo_stiffness")?;
        pos(self.hole.stiffness, "sim.hole.stiffness")?;
        if self.hole.damping < 0.0 {
            return Err("sim.hole.damping must be non-negative".into());
        }
        if self.hole.radius <= self.object.peg_radius {
            return Err("sim.hole.radius must exceed the peg radius".into());
        }
        if Vec3::from(self.hole.axis).norm() < 1e-9 {
            return Err("sim.hole.axis must be non-zero".into());
        }
        Ok(())
    }
}
