//! Cooperative handling: carry the grasped object to a random target while
//! the inner impedance loops keep the grasp forces on their set-points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::observation::{arm_motion, object_pose, Observation, ObservationSpec, SeriesRecorder};
use super::pipeline::{ControlPipeline, PipelineGraph, ReferenceFilter, Task, Variant};
use super::reward::HandlingReward;
use super::{Environment, StepInfo, StepOutcome, Termination, TraceRow};
use crate::error::{LacError, Result};
use crate::impedance::{clamp_params, ImpedanceBounds};
use crate::sim::{SimConfig, World};
use crate::{Transform, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandlingEnvConfig {
    /// Centre of the target box; defaults to the object's nominal position.
    pub target_center: Option<[f64; 3]>,
    pub target_box: [f64; 3],
    /// Half extents of the box the desired object position is clamped to,
    /// around the nominal position.
    pub workspace: [f64; 3],
    pub episode_len: usize,
    /// Agent rate, Hz. The inner rate is set by `sim.dt`.
    pub high_rate: f64,
    /// Bandwidth of the smoothing applied to the desired object motion, rad/s.
    pub reference_bandwidth: f64,
    /// Largest object displacement per step and axis, m.
    pub max_delta: f64,
    pub squeeze: f64,
    /// Desired inertia of the impedance loops, kg.
    pub m_d: f64,
    pub bounds: ImpedanceBounds,
    /// Final distance that counts as success, m.
    pub success_tolerance: f64,
    pub reward: HandlingReward,
}

impl Default for HandlingEnvConfig {
    fn default() -> Self {
        Self {
            target_center: None,
            target_box: [0.1, 0.3, 0.12],
            workspace: [0.15, 0.25, 0.15],
            episode_len: 200,
            high_rate: 20.0,
            reference_bandwidth: 20.0,
            max_delta: 0.01,
            squeeze: 10.0,
            m_d: 1.0,
            bounds: ImpedanceBounds::default(),
            success_tolerance: 0.005,
            reward: HandlingReward::default(),
        }
    }
}

/// Inner steps per agent step, if the rates divide evenly.
pub(crate) fn substeps(high_rate: f64, dt: f64) -> Result<usize> {
    let n = 1.0 / (high_rate * dt);
    if !(n.is_finite() && n >= 1.0 && (n - n.round()).abs() < 1e-6) {
        return Err(LacError::Config(format!(
            "inner rate {} Hz is not an integer multiple of the agent rate {high_rate} Hz",
            1.0 / dt
        )));
    }
    Ok(n.round() as usize)
}

impl HandlingEnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        let r = &self.reward;
        if !(r.f_min > 0.0 && r.f_min < r.f_max) {
            return Err(format!("need 0 < f_min < f_max, got {} and {}", r.f_min, r.f_max));
        }
        if !(r.sigma_d > 0.0 && r.sigma_f > 0.0) {
            return Err("reward normalization constants must be positive".into());
        }
        if self.target_box.iter().chain(&self.workspace).any(|v| !(*v >= 0.0)) {
            return Err("target box and workspace must be non-negative".into());
        }
        if self.episode_len == 0 || !(self.max_delta > 0.0) || !(self.m_d > 0.0) || !(self.reference_bandwidth > 0.0) {
            return Err("episode_len, max_delta, m_d and reference_bandwidth must be positive".into());
        }
        self.bounds.validate()
    }
}

/// Action entries outside [−1, 1] are clamped; NaN reads as zero.
pub(crate) fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

pub(crate) fn raw_params(action: &[f64]) -> [f64; 6] {
    std::array::from_fn(|i| action[3 + i])
}

pub struct HandlingEnv {
    pub cfg: HandlingEnvConfig,
    world: World,
    pipeline: ControlPipeline,
    spec: ObservationSpec,
    rng: ChaCha8Rng,
    substeps: usize,
    nominal: Transform,
    target: Vec3,
    desired: Vec3,
    reference: ReferenceFilter,
    step: usize,
    done: bool,
    series: SeriesRecorder,
    trace: Option<Vec<TraceRow>>,
}

impl HandlingEnv {
    pub fn new(cfg: HandlingEnvConfig, sim: SimConfig, variant: Variant, seed: u64) -> Result<Self> {
        cfg.validate().map_err(LacError::Config)?;
        let substeps = substeps(cfg.high_rate, sim.dt)?;
        let world = World::new(sim, false)?;
        let graph = PipelineGraph::build(Task::Handling, variant);
        let mid = cfg.bounds.midpoint(cfg.m_d);
        let pipeline = ControlPipeline::new(graph, world.dt(), cfg.squeeze, mid, mid);
        let nominal = world.state.object.pose;
        Ok(Self {
            spec: ObservationSpec::handling(substeps),
            rng: ChaCha8Rng::seed_from_u64(seed),
            substeps,
            nominal,
            target: nominal.translation,
            desired: nominal.translation,
            reference: ReferenceFilter::new(cfg.reference_bandwidth, nominal.translation),
            step: 0,
            done: false,
            series: SeriesRecorder::new(substeps),
            trace: None,
            cfg,
            world,
            pipeline,
        })
    }

    pub fn target(&self) -> Vec3 {
        self.target
    }

    pub fn set_target(&mut self, target: Vec3) {
        self.target = target;
    }

    /// Commanded object position after clamping.
    pub fn desired_position(&self) -> Vec3 {
        self.desired
    }

    /// Smoothed reference the pipeline tracks.
    pub fn reference_position(&self) -> Vec3 {
        self.reference.position
    }

    pub fn pipeline(&self) -> &ControlPipeline {
        &self.pipeline
    }

    fn target_center(&self) -> Vec3 {
        self.cfg.target_center.map_or(self.nominal.translation, Vec3::from)
    }

    fn sample_target(&mut self) -> Vec3 {
        let c = self.target_center();
        Vec3::from_fn(|i, _| {
            let h = self.cfg.target_box[i] / 2.0;
            c[i] + if h > 0.0 { self.rng.random_range(-h..h) } else { 0.0 }
        })
    }

    fn clamp_workspace(&self, x: Vec3) -> Vec3 {
        let c = self.nominal.translation;
        Vec3::from_fn(|i, _| x[i].clamp(c[i] - self.cfg.workspace[i], c[i] + self.cfg.workspace[i]))
    }

    pub fn observe(&self) -> Result<Observation> {
        let w = &self.world;
        let origin = self.nominal.translation;
        let q: Vec<f64> = w.state.arms.iter().flat_map(|a| a.q).collect();
        let qd: Vec<f64> = w.state.arms.iter().flat_map(|a| a.qd).collect();
        let [pos, rot, lin, ang] = arm_motion(w, &origin);
        let [op, or] = object_pose(w, &origin);
        let err: Vec<f64> = (self.target - w.state.object.pose.translation).iter().copied().collect();
        let motion = self
            .spec
            .normalize_motion(&[&q, &qd, &pos, &rot, &lin, &ang, &op, &or, &err])?;
        let (series, series_time) = self.series.build(&self.spec)?;
        Ok(Observation {
            motion,
            series,
            series_time,
        })
    }
}

impl Environment for HandlingEnv {
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
        self.world.reset(self.nominal, Vec3::zeros())?;
        self.target = self.sample_target();
        self.desired = self.nominal.translation;
        self.reference.reset(self.desired);
        self.pipeline.inner_params = self.cfg.bounds.midpoint(self.cfg.m_d);
        self.pipeline.reset(&self.world);
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
                "action has {} entries, the {} pipeline takes {}",
                action.len(),
                "handling",
                graph.action_dim
            )));
        }
        let delta = Vec3::from_fn(|i, _| unit(action[i]) * self.cfg.max_delta);
        let dt = self.world.dt();
        let end = self.clamp_workspace(self.desired + delta);
        if graph.learned_params {
            self.pipeline.inner_params = clamp_params(&raw_params(action), &self.cfg.bounds, self.cfg.m_d);
        }

        let mut err_sum = [0.0; 2];
        let mut samples = 0usize;
        let mut lost = false;
        for _ in 0..self.substeps {
            let x = self.reference.step(&end, dt);
            let pose = Transform::new(self.nominal.rotation, x);
            match self.pipeline.substep(&mut self.world, &pose, &self.reference.acceleration) {
                Ok(smp) => {
                    for i in 0..2 {
                        err_sum[i] += smp.error[i].norm();
                    }
                    samples += 1;
                    let mut row = Vec::with_capacity(6);
                    row.extend(smp.applied[0].iter());
                    row.extend(smp.applied[1].iter());
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
                }
                Err(LacError::GraspLost { .. }) => {
                    lost = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        self.desired = end;

        let n = samples.max(1) as f64;
        let force_error = [err_sum[0] / n, err_sum[1] / n];
        let grasp_force = self.world.state.pads[0]
            .normal_force
            .min(self.world.state.pads[1].normal_force);
        let distance = (self.target - self.world.state.object.pose.translation).norm();
        let reward = if lost {
            self.cfg.reward.penalty
        } else {
            self.cfg
                .reward
                .reward(distance, (force_error[0] + force_error[1]) / 2.0, grasp_force)
        };
        let index = self.step;
        self.step += 1;
        let truncated = !lost && self.step >= self.cfg.episode_len;
        let termination = if lost {
            Some(Termination::GraspLost)
        } else if truncated && distance < self.cfg.success_tolerance {
            Some(Termination::Success)
        } else {
            None
        };
        self.done = lost || truncated;
        let info = StepInfo {
            step: index,
            force_error,
            grasp_force,
            position_error: distance,
            max_env_force: 0.0,
            depth: 0.0,
            termination,
            truncated,
        };
        Ok(StepOutcome {
            observation: self.observe()?,
            reward,
            done: self.done,
            terminal: lost,
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

    fn env(variant: Variant, seed: u64) -> HandlingEnv {
        HandlingEnv::new(HandlingEnvConfig::default(), SimConfig::default(), variant, seed).unwrap()
    }

    #[test]
    fn same_seed_same_target() {
        let mut a = env(Variant::Lac, 7);
        let mut b = env(Variant::Lac, 7);
        for _ in 0..3 {
            a.reset().unwrap();
            b.reset().unwrap();
            assert_eq!(a.target(), b.target());
        }
        let mut c = env(Variant::Lac, 8);
        c.reset().unwrap();
        assert_ne!(a.target(), c.target());
    }

    #[test]
    fn reset_observation_shape_and_chain() {
        let mut e = env(Variant::Lac, 1);
        let obs = e.reset().unwrap();
        assert_eq!(obs.motion.len(), 57);
        assert_eq!(obs.series.len(), 150);
        assert!(obs.series.iter().all(|v| *v == 0.0));
        assert!(e.world().chain_residual() < 1e-6);
    }

    #[test]
    fn hold_still_keeps_grasp_and_object() {
        let mut e = env(Variant::Lac, 2);
        e.reset().unwrap();
        let start = e.world().state.object.pose.translation;
        let mut out = None;
        for _ in 0..10 {
            out = Some(e.step(&[0.0; 9]).unwrap());
        }
        let out = out.unwrap();
        assert!(!out.done);
        let drift = (e.world().state.object.pose.translation - start).norm();
        assert!(drift < 2e-3, "drift {drift}");
        assert!(out.info.grasp_force > 1.0);
        assert!(out.reward > 0.0 && out.reward <= 1.0);
        let t = &out.observation.series_time;
        assert!(t.windows(2).all(|w| (w[1] - w[0] - 0.002).abs() < 1e-9));
    }

    #[test]
    fn no_imp_drops_the_object() {
        let mut e = env(Variant::NoImp, 3);
        e.reset().unwrap();
        let mut lost = false;
        for _ in 0..20 {
            let o = e.step(&[0.0; 3]).unwrap();
            if o.done {
                assert_eq!(o.info.termination, Some(Termination::GraspLost));
                assert_eq!(o.reward, -3.0);
                assert!(o.terminal);
                lost = true;
                break;
            }
        }
        assert!(lost);
    }

    #[test]
    fn wrong_action_width_rejected() {
        let mut e = env(Variant::FixedImp, 4);
        e.reset().unwrap();
        assert!(matches!(e.step(&[0.0; 9]), Err(LacError::Config(_))));
        assert!(e.step(&[0.0; 3]).is_ok());
    }

    #[test]
    fn desired_motion_is_clamped() {
        let mut e = env(Variant::FixedImp, 5);
        e.reset().unwrap();
        let mut prev = (e.desired_position(), e.reference_position());
        for a in [[5.0, -7.0, f64::NAN], [1e9, 1e9, 1e9], [-1.0, 0.3, 0.0]] {
            e.step(&a).unwrap();
            let now = (e.desired_position(), e.reference_position());
            assert!((now.0 - prev.0).amax() <= 0.01 + 1e-15);
            assert!((now.1 - prev.1).amax() <= 0.01 + 1e-12);
            prev = now;
        }
    }

    #[test]
    fn rates_must_divide() {
        assert_eq!(substeps(20.0, 0.002).unwrap(), 25);
        assert!(substeps(30.0, 0.002).is_err());
    }
}
