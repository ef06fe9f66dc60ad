use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use super::world::World;
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSpec {
    /// High-level step indices at which a pulse fires.
    pub trigger_steps: Vec<usize>,
    pub scale: f64,
    pub seed: u64,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            trigger_steps: Vec::new(),
            scale: 0.5,
            seed: 0,
        }
    }
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.scale.is_finite() && self.scale >= 0.0 {
            Ok(())
        } else {
            Err(format!("disturbance scale must be non-negative, got {}", self.scale))
        }
    }

    pub fn fires_at(&self, step: usize) -> bool {
        self.scale > 0.0 && self.trigger_steps.contains(&step)
    }

    /// Pulse forces for both arms at `step`, given their sensed force
    /// magnitudes. Directions depend only on (seed, step, arm).
    pub fn pulses(&self, step: usize, sensed: [f64; 2]) -> [Vec3; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let _: u64 = rng.random();
        [0, 1].map(|i| {
            let d: [f64; 3] = UnitSphere.sample(&mut rng);
            Vec3::from(d) * (self.scale * sensed[i])
        })
    }
}

/// Fires the pulse for high-level step `step`, if scheduled. Returns the
/// applied forces.
pub fn apply_disturbance(world: &mut World, spec: &DisturbanceSpec, step: usize) -> Option<[Vec3; 2]> {
    if !spec.fires_at(step) {
        return None;
    }
    let mags = [0, 1].map(|i| world.state.sensed[i].force.norm());
    let pulses = spec.pulses(step, mags);
    for (i, f) in pulses.iter().enumerate() {
        world.push_end_effector(i, *f);
    }
    Some(pulses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;

    #[test]
    fn zero_scale_leaves_world_unchanged() {
        let mut w = World::new(SimConfig::default(), false).unwrap();
        let spec = DisturbanceSpec {
            trigger_steps: vec![0],
            scale: 0.0,
            seed: 1,
        };
        let before = w.state.clone();
        assert!(apply_disturbance(&mut w, &spec, 0).is_none());
        let cmds = [w.state.arms[0].ee, w.state.arms[1].ee];
        let mut reference = World::new(SimConfig::default(), false).unwrap();
        assert_eq!(before, reference.state);
        w.step(&cmds).unwrap();
        reference.step(&cmds).unwrap();
        assert_eq!(w.state, reference.state);
    }

    #[test]
    fn same_seed_same_pulse() {
        let spec = DisturbanceSpec {
            trigger_steps: vec![3],
            scale: 0.5,
            seed: 42,
        };
        let a = spec.pulses(3, [10.0, 12.0]);
        let b = spec.pulses(3, [10.0, 12.0]);
        assert_eq!(a, b);
        assert!((a[0].norm() - 5.0).abs() < 1e-12);
        assert!((a[1].norm() - 6.0).abs() < 1e-12);
        assert_ne!(spec.pulses(4, [10.0, 12.0]), a);
    }
}
