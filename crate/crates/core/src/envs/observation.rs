//! Observation layouts and their normalization.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LacError, Result};
use crate::math::log_so3;
use crate::rl::ObsDims;
use crate::sim::World;
use crate::Vec3;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub dim: usize,
    /// Raw values are divided by this before reaching the agent.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub version: u32,
    pub task: String,
    pub motion: Vec<Component>,
    pub series: Vec<Component>,
    pub series_len: usize,
}

/// Normalized observation: motion vector plus a row-major force series of
/// `series_len` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub motion: Vec<f64>,
    pub series: Vec<f64>,
    /// Sample times of the series rows, s.
    pub series_time: Vec<f64>,
}

fn comp(name: &str, dim: usize, scale: f64) -> Component {
    Component {
        name: name.into(),
        dim,
        scale,
    }
}

impl ObservationSpec {
    pub fn handling(series_len: usize) -> Self {
        Self {
            version: SPEC_VERSION,
            task: "handling".into(),
            motion: vec![
                comp("joint_angles", 12, std::f64::consts::PI),
                comp("joint_rates", 12, 2.0),
                comp("ee_positions", 6, 0.5),
                comp("ee_orientations", 6, std::f64::consts::PI),
                comp("ee_linear_velocities", 6, 0.5),
                comp("ee_angular_velocities", 6, 2.0),
                comp("object_position", 3, 0.5),
                comp("object_orientation", 3, std::f64::consts::PI),
                comp("target_error", 3, 0.1),
            ],
            series: vec![comp("arm1_force", 3, 20.0), comp("arm2_force", 3, 20.0)],
            series_len,
        }
    }

    pub fn assembly(series_len: usize, insertion_depth: f64) -> Self {
        Self {
            version: SPEC_VERSION,
            task: "assembly".into(),
            motion: vec![
                comp("ee_positions", 6, 0.5),
                comp("ee_orientations", 6, std::f64::consts::PI),
                comp("ee_linear_velocities", 6, 0.5),
                comp("ee_angular_velocities", 6, 2.0),
                comp("object_position", 3, 0.5),
                comp("object_orientation", 3, std::f64::consts::PI),
                comp("env_force", 3, 20.0),
                comp("depth", 1, insertion_depth),
            ],
            series: vec![comp("env_force", 3, 20.0), comp("mean_force_error", 3, 20.0)],
            series_len,
        }
    }

    pub fn motion_dim(&self) -> usize {
        self.motion.iter().map(|c| c.dim).sum()
    }

    pub fn series_width(&self) -> usize {
        self.series.iter().map(|c| c.dim).sum()
    }

    pub fn dims(&self) -> ObsDims {
        ObsDims {
            motion: self.motion_dim(),
            series_len: self.series_len,
            series_width: self.series_width(),
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        crate::rl::checkpoint::hex(&Sha256::digest(&json))
    }

    /// Normalizes raw motion components given in layout order.
    pub fn normalize_motion(&self, parts: &[&[f64]]) -> Result<Vec<f64>> {
        if parts.len() != self.motion.len() {
            return Err(LacError::ObservationSpec(format!(
                "{} motion components supplied, layout has {}",
                parts.len(),
                self.motion.len()
            )));
        }
        let mut out = Vec::with_capacity(self.motion_dim());
        for (c, p) in self.motion.iter().zip(parts) {
            if p.len() != c.dim {
                return Err(LacError::ObservationSpec(format!(
                    "component {} has {} values, expected {}",
                    c.name,
                    p.len(),
                    c.dim
                )));
            }
            out.extend(p.iter().map(|v| v / c.scale));
        }
        Ok(out)
    }

    /// Normalizes one raw series row.
    pub fn normalize_row(&self, row: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if row.len() != self.series_width() {
            return Err(LacError::ObservationSpec(format!(
                "series row has {} values, expected {}",
                row.len(),
                self.series_width()
            )));
        }
        let mut k = 0;
        for c in &self.series {
            out.extend(row[k..k + c.dim].iter().map(|v| v / c.scale));
            k += c.dim;
        }
        Ok(())
    }

    pub fn check(&self, obs: &Observation) -> Result<()> {
        self.dims().check(obs.motion.len(), obs.series.len())
    }
}

/// End-effector positions (relative to `origin`), orientations and twists of
/// both arms, in layout order.
pub(crate) fn arm_motion(world: &World, origin: &Vec3) -> [Vec<f64>; 4] {
    let mut pos = Vec::with_capacity(6);
    let mut rot = Vec::with_capacity(6);
    let mut lin = Vec::with_capacity(6);
    let mut ang = Vec::with_capacity(6);
    for a in &world.state.arms {
        pos.extend((a.ee.translation - origin).iter());
        rot.extend(log_so3(&a.ee.rotation).iter());
        lin.extend(a.ee_linear_velocity.iter());
        ang.extend(a.ee_angular_velocity.iter());
    }
    [pos, rot, lin, ang]
}

pub(crate) fn object_pose(world: &World, origin: &Vec3) -> [Vec<f64>; 2] {
    let o = &world.state.object.pose;
    [
        (o.translation - origin).iter().copied().collect(),
        log_so3(&o.rotation).iter().copied().collect(),
    ]
}

/// Fixed-length ring of raw series rows, oldest first when read.
#[derive(Debug, Clone)]
pub(crate) struct SeriesRecorder {
    rows: Vec<Vec<f64>>,
    times: Vec<f64>,
    len: usize,
}

impl SeriesRecorder {
    pub fn new(len: usize) -> Self {
        Self {
            rows: Vec::with_capacity(len),
            times: Vec::with_capacity(len),
            len,
        }
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.times.clear();
    }

    pub fn push(&mut self, time: f64, row: Vec<f64>) {
        if self.rows.len() == self.len {
            self.rows.remove(0);
            self.times.remove(0);
        }
        self.rows.push(row);
        self.times.push(time);
    }

    /// Normalized series, zero-padded at the front when short.
    pub fn build(&self, spec: &ObservationSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = spec.series_width();
        let pad = self.len - self.rows.len();
        let mut out = vec![0.0; pad * w];
        for r in &self.rows {
            spec.normalize_row(r, &mut out)?;
        }
        let mut times = vec![f64::NAN; pad];
        times.extend(&self.times);
        Ok((out, times))
    }
}
