//! Peg-in-hole insertion: a PD controller drives the object toward the
//! believed hole, the agent adds a residual and tunes the outer impedance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::handling::{raw_params, substeps, unit};
use super::observation::{arm_motion, object_pose, Observation, ObservationSpec, SeriesRecorder};
use super::pipeline::{ControlPipeline, PipelineGraph, ReferenceFilter, Task, Variant};
use super::reward::{AssemblyOutcome, AssemblyReward};
use super::{Environment, StepInfo, StepOutcome, Termination, TraceRow};
use crate::error::{LacError, Result};
use crate::impedance::{clamp_params, ImpedanceBounds, ImpedanceParams};
use crate::sim::{SimConfig, World};
use crate::{Transform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdGains {
    pub k_p: f64,
    pub k_d: f64,
    /// Per-axis cap on one step of the PD target, m.
    pub max_step: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            k_p: 0.15,
            k_d: 0.0,
            max_step: 0.002,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedImpedance {
    pub b: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblyEnvConfig {
    /// Target insertion depth d_s, m.
    pub insertion_depth: f64,
    pub episode_len: usize,
    pub high_rate: f64,
    /// Bandwidth of the smoothing applied to the desired object motion, rad/s.
    pub reference_bandwidth: f64,
    pub pd: PdGains,
    /// PD goal lies this far beyond d_s so the controller does not stall
    /// just short of it, m.
    pub goal_overshoot: f64,
    /// Largest residual per step and axis, m.
    pub residual_scale: f64,
    pub inner: FixedImpedance,
    pub m_d: f64,
    pub bounds: ImpedanceBounds,
    pub squeeze: f64,
    /// Axial gap between peg tip and hole entry at reset, m.
    pub approach: [f64; 2],
    /// Radius of the disk the initial lateral peg offset is drawn from, m.
    pub lateral_offset: f64,
    /// Hidden hole-centre error magnitude range, m. `None` keeps the hole
    /// where the controllers believe it is.
    pub hole_offset: Option<[f64; 2]>,
    pub reward: AssemblyReward,
}

impl Default for AssemblyEnvConfig {
    fn default() -> Self {
        Self {
            insertion_depth: 0.03,
            episode_len: 300,
            high_rate: 20.0,
            reference_bandwidth: 20.0,
            pd: PdGains::default(),
            goal_overshoot: 0.005,
            residual_scale: 0.002,
            inner: FixedImpedance { b: 200.0, k: 2000.0 },
            m_d: 1.0,
            bounds: ImpedanceBounds::default(),
            squeeze: 10.0,
            approach: [0.005, 0.010],
            lateral_offset: 0.003,
            hole_offset: None,
            reward: AssemblyReward::default(),
        }
    }
}

impl AssemblyEnvConfig {
    pub fn validate(&self, sim: &SimConfig) -> Result<(), String> {
        if !(self.insertion_depth > 0.0 && self.insertion_depth <= sim.hole.depth) {
            return Err(format!(
                "insertion depth {} must lie in (0, hole depth {}]",
                self.insertion_depth, sim.hole.depth
            ));
        }
        if !(self.reward.f_max > 0.0) {
            return Err("assembly f_max must be positive".into());
        }
        if !(self.reward.sigma_d > 0.0 && self.reward.sigma_f > 0.0) {
            return Err("reward normalization constants must be positive".into());
        }
        if self.episode_len == 0 || !(self.pd.max_step > 0.0) || !(self.m_d > 0.0) || !(self.reference_bandwidth > 0.0) {
            return Err("episode_len, pd.max_step, m_d and reference_bandwidth must be positive".into());
        }
        if !(self.approach[0] >= 0.0 && self.approach[0] <= self.approach[1]) {
            return Err("approach must be an ordered non-negative range".into());
        }
        if let Some([lo, hi]) = self.hole_offset {
            if !(lo >= 0.0 && lo <= hi) {
                return Err("hole_offset must be an ordered non-negative range".into());
            }
        }
        if !(self.inner.b > 0.0 && self.inner.k > 0.0) {
            return Err("inner impedance must be positive".into());
        }
        self.bounds.validate()
    }

    pub fn inner_params(&self) -> ImpedanceParams {
        ImpedanceParams::uniform(self.m_d, self.inner.b, self.inner.k)
    }
}

/// Two unit vectors spanning the plane normal to `axis`.
fn lateral_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = axis.cross(&helper).normalize();
    (u, axis.cross(&u))
}

pub struct AssemblyEnv {
    pub cfg: AssemblyEnvConfig,
    world: World,
    pipeline: ControlPipeline,
    spec: ObservationSpec,
    rng: ChaCha8Rng,
    substeps: usize,
    rotation: nalgebra::Matrix3<f64>,
    /// Hole centre and axis as the controllers believe them.
    believed_center: Vec3,
    axis: Vec3,
    hole_offset: Vec3,
    pd_target: Vec3,
    desired: Vec3,
    reference: ReferenceFilter,
    prev_error: Vec3,
    step: usize,
    done: bool,
    series: SeriesRecorder,
    trace: Option<Vec<TraceRow>>,
}

impl AssemblyEnv {
    pub fn new(cfg: AssemblyEnvConfig, sim: SimConfig, variant: Variant, seed: u64) -> Result<Self> {
        cfg.validate(&sim).map_err(LacError::Config)?;
        let substeps = substeps(cfg.high_rate, sim.dt)?;
        let believed_center = Vec3::from(sim.hole.center);
        let axis = Vec3::from(sim.hole.axis).normalize();
        let world = World::new(sim, true)?;
        let graph = PipelineGraph::build(Task::Assembly, variant);
        let pipeline = ControlPipeline::new(
            graph,
            world.dt(),
            cfg.squeeze,
            cfg.inner_params(),
            cfg.bounds.midpoint(cfg.m_d),
        );
        let rotation = world.state.object.pose.rotation;
        let start = world.state.object.pose.translation;
        Ok(Self {
            spec: ObservationSpec::assembly(substeps, cfg.insertion_depth),
            rng: ChaCha8Rng::seed_from_u64(seed),
            substeps,
            rotation,
            believed_center,
            axis,
            hole_offset: Vec3::zeros(),
            pd_target: start,
            desired: start,
            reference: ReferenceFilter::new(cfg.reference_bandwidth, start),
            prev_error: Vec3::zeros(),
            step: 0,
            done: false,
            series: SeriesRecorder::new(substeps),
            trace: None,
            cfg,
            world,
            pipeline,
        })
    }

    /// Hidden error between the true and believed hole centres.
    pub fn hole_offset(&self) -> Vec3 {
        self.hole_offset
    }

    pub fn pipeline(&self) -> &ControlPipeline {
        &self.pipeline
    }

    /// Object position that puts the peg tip `d_s + overshoot` deep in the
    /// believed hole.
    fn goal(&self) -> Vec3 {
        let tip = self.rotation * self.world.peg.tip;
        self.believed_center + self.axis * (self.cfg.insertion_depth + self.cfg.goal_overshoot) - tip
    }

    fn draw_lateral(&mut self, radius: f64) -> Vec3 {
        if radius <= 0.0 {
            return Vec3::zeros();
        }
        let (u, v) = lateral_basis(&self.axis);
        let r = radius * self.rng.random::<f64>().sqrt();
        let phi = self.rng.random_range(0.0..std::f64::consts::TAU);
        (u * phi.cos() + v * phi.sin()) * r
    }

    fn draw_hole_offset(&mut self) -> Vec3 {
        let Some([lo, hi]) = self.cfg.hole_offset else {
            return Vec3::zeros();
        };
        let (u, v) = lateral_basis(&self.axis);
        let mag = if hi > lo { self.rng.random_range(lo..hi) } else { lo };
        let phi = self.rng.random_range(0.0..std::f64::consts::TAU);
        (u * phi.cos() + v * phi.sin()) * mag
    }

    pub fn observe(&self) -> Result<Observation> {
        let w = &self.world;
        let origin = self.believed_center;
        let [pos, rot, lin, ang] = arm_motion(w, &origin);
        let [op, or] = object_pose(w, &origin);
        let fenv: Vec<f64> = w.state.env_wrench.force.iter().copied().collect();
        let depth = [w.state.depth];
        let motion = self
            .spec
            .normalize_motion(&[&pos, &rot, &lin, &ang, &op, &or, &fenv, &depth])?;
        let (series, series_time) = self.series.build(&self.spec)?;
        Ok(Observation {
            motion,
            series,
            series_time,
        })
    }
}

impl Environment for AssemblyEnv {
    fn spec(&self) -> &ObservationSpec {
        &self.spec
    }

    fn action_dim(&self) -> usize {
        self.pipeline.graph.action_dim
    }

    fn episode_len(&self) -> usize {
        self.cfg.episode_len
    }

    fn reset(&mut self) -> Result<Observation> {
        let [lo, hi] = self.cfg.approach;
        let gap = if hi > lo { self.rng.random_range(lo..hi) } else { lo };
        let lateral = self.draw_lateral(self.cfg.lateral_offset);
        self.hole_offset = self.draw_hole_offset();
        let tip = self.believed_center - self.axis * gap + lateral;
        let pose = Transform::new(self.rotation, tip - self.rotation * self.world.peg.tip);
        self.world.reset(pose, self.hole_offset)?;
        self.pipeline.outer_params = self.cfg.bounds.midpoint(self.cfg.m_d);
        self.pipeline.reset(&self.world);
        self.pd_target = pose.translation;
        self.desired = pose.translation;
        self.reference.reset(pose.translation);
        self.prev_error = self.goal() - pose.translation;
        self.step = 0;
        self.done = false;
        self.series.clear();
        if let Some(t) = &mut self.trace {
            t.clear();
        }
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(LacError::Config("step called on a finished episode".into()));
        }
        let graph = self.pipeline.graph;
        if action.len() != graph.action_dim {
            return Err(LacError::Config(format!(
                "action has {} entries, the assembly pipeline takes {}",
                action.len(),
                graph.action_dim
            )));
        }
        if graph.learned_params {
            self.pipeline.outer_params = clamp_params(&raw_params(action), &self.cfg.bounds, self.cfg.m_d);
        }
        let err = self.goal() - self.world.state.object.pose.translation;
        let pd = &self.cfg.pd;
        let u = (err * pd.k_p + (err - self.prev_error) * pd.k_d).map(|v| v.clamp(-pd.max_step, pd.max_step));
        self.prev_error = err;
        self.pd_target += u;
        let residual = Vec3::from_fn(|i, _| unit(action[i]) * self.cfg.residual_scale);
        let dt = self.world.dt();
        let end = self.pd_target + residual;

        let d_s = self.cfg.insertion_depth;
        let f_max = self.cfg.reward.f_max;
        let mut err_sum = [0.0; 2];
        let mut samples = 0usize;
        let mut max_env = 0.0f64;
        let mut termination = None;
        for _ in 0..self.substeps {
            let x = self.reference.step(&end, dt);
            let pose = Transform::new(self.rotation, x);
            let smp = match self.pipeline.substep(&mut self.world, &pose, &self.reference.acceleration) {
                Ok(smp) => smp,
                Err(LacError::GraspLost { .. }) => {
                    termination = Some(Termination::GraspLost);
                    break;
                }
                Err(e) => return Err(e),
            };
            for i in 0..2 {
                err_sum[i] += smp.error[i].norm();
            }
            samples += 1;
            let fenv = smp.env_force.norm();
            max_env = max_env.max(fenv);
            let mean_err = (smp.error[0] + smp.error[1]) / 2.0;
            let mut row = Vec::with_capacity(6);
            row.extend(smp.env_force.iter());
            row.extend(mean_err.iter());
            self.series.push(smp.time, row);
            if let Some(t) = &mut self.trace {
                let st = &self.world.state;
                t.push(TraceRow {
                    step: self.step,
                    time: smp.time,
                    object: st.object.pose.translation.into(),
                    f1: smp.applied[0].into(),
                    f2: smp.applied[1].into(),
                    f_env: smp.env_force.into(),
                    depth: st.depth,
                });
            }
            if fenv > f_max {
                termination = Some(Termination::ContactForce);
                break;
            }
            if self.world.state.depth >= d_s {
                termination = Some(Termination::Success);
                break;
            }
        }
        self.desired = end;

        let index = self.step;
        self.step += 1;
        let depth = self.world.state.depth;
        let remaining = (d_s - depth).max(0.0);
        let env_force = self.world.state.env_wrench.force.norm();
        let outcome = match termination {
            Some(Termination::Success) => AssemblyOutcome::Success,
            Some(_) => AssemblyOutcome::Unsafe,
            None => AssemblyOutcome::InProgress,
        };
        let reward = self
            .cfg
            .reward
            .reward(outcome, remaining, env_force, index, self.cfg.episode_len);
        let terminal = termination.is_some();
        let truncated = !terminal && self.step >= self.cfg.episode_len;
        self.done = terminal || truncated;
        let n = samples.max(1) as f64;
        let info = StepInfo {
            step: index,
            force_error: [err_sum[0] / n, err_sum[1] / n],
            grasp_force: self.world.state.pads[0]
                .normal_force
                .min(self.world.state.pads[1].normal_force),
            position_error: remaining,
            max_env_force: max_env,
            depth,
            termination,
            truncated,
        };
        Ok(StepOutcome {
            observation: self.observe()?,
            reward,
            done: self.done,
            terminal,
            info,
        })
    }

    fn world(&self) -> &World {
        &self.world
    }

    fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(cfg: AssemblyEnvConfig, variant: Variant, seed: u64) -> AssemblyEnv {
        AssemblyEnv::new(cfg, SimConfig::default(), variant, seed).unwrap()
    }

    #[test]
    fn zero_offset_is_coaxial() {
        let cfg = AssemblyEnvConfig {
            lateral_offset: 0.0,
            ..Default::default()
        };
        let mut e = env(cfg, Variant::Lac, 1);
        let obs = e.reset().unwrap();
        assert_eq!(obs.motion.len(), 34);
        let hole = e.world().hole.unwrap();
        let (s, radial) = hole.coordinates(&e.world().peg_tip());
        assert!(radial.norm() < 1e-9);
        assert!((-0.010..=-0.005).contains(&s), "gap {s}");
    }

    #[test]
    fn hole_offset_draws_in_range_and_repeats() {
        let cfg = AssemblyEnvConfig {
            hole_offset: Some([0.001, 0.005]),
            ..Default::default()
        };
        let mut a = env(cfg.clone(), Variant::Lac, 9);
        let mut b = env(cfg, Variant::Lac, 9);
        for _ in 0..20 {
            a.reset().unwrap();
            b.reset().unwrap();
            let o = a.hole_offset();
            assert_eq!(o, b.hole_offset());
            assert!(o.norm() >= 0.001 && o.norm() <= 0.005);
            assert!(o.x.abs() < 1e-15);
        }
    }

    #[test]
    fn pd_alone_inserts_nominal_peg() {
        let mut e = env(AssemblyEnvConfig::default(), Variant::FixedImp, 3);
        e.reset().unwrap();
        let mut last = None;
        let mut depth_prev = f64::NEG_INFINITY;
        for _ in 0..300 {
            let o = e.step(&[0.0; 3]).unwrap();
            assert!(o.info.depth >= depth_prev - 1e-4);
            depth_prev = o.info.depth;
            let done = o.done;
            last = Some(o);
            if done {
                break;
            }
        }
        let o = last.unwrap();
        assert!(o.info.success(), "{:?}", o.info);
        assert!(o.reward >= 100.0 && o.reward <= 200.0);
    }

    #[test]
    fn hard_push_trips_the_force_limit() {
        let cfg = AssemblyEnvConfig {
            hole_offset: Some([0.008, 0.008]),
            ..Default::default()
        };
        let mut e = env(cfg, Variant::Lac, 4);
        e.reset().unwrap();
        let mut saw = None;
        for _ in 0..300 {
            // Full forward residual, stiffest outer impedance.
            let o = e.step(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
            if o.done {
                saw = Some(o);
                break;
            }
        }
        let o = saw.expect("episode should end");
        assert_eq!(o.info.termination, Some(Termination::ContactForce));
        assert!(o.info.max_env_force > 20.0);
        assert_eq!(o.reward, -10.0);
        assert!(o.terminal);
    }
}
