//! Episode runner shared by training-time evaluation and the standalone
//! commands.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Observation, StepInfo, TraceRow};
use crate::error::Result;
use crate::rl::SacAgent;
use crate::sim::{apply_disturbance, DisturbanceSpec};

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Agent action for an observation, widened for the environment.
pub fn act(agent: &SacAgent<f32>, obs: &Observation, deterministic: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let a = agent.act(&to_f32(&obs.motion), &to_f32(&obs.series), deterministic, rng)?;
    Ok(a.into_iter().map(f64::from).collect())
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: usize,
    pub success: bool,
    pub safety_violation: bool,
    /// Per-arm force error averaged over the episode, N.
    pub force_error: [f64; 2],
    pub final_position_error: f64,
    pub max_contact_force: f64,
    pub infos: Vec<StepInfo>,
    pub trace: Vec<TraceRow>,
}

impl EpisodeResult {
    pub fn mean_reward(&self) -> f64 {
        self.total_reward / self.steps.max(1) as f64
    }
}

pub struct EpisodeOptions<'a> {
    pub deterministic: bool,
    pub disturbance: Option<&'a DisturbanceSpec>,
    pub keep_infos: bool,
    pub trace: bool,
}

impl Default for EpisodeOptions<'_> {
    fn default() -> Self {
        Self {
            deterministic: true,
            disturbance: None,
            keep_infos: false,
            trace: false,
        }
    }
}

pub fn run_episode(
    env: &mut dyn Environment,
    agent: &SacAgent<f32>,
    rng: &mut impl Rng,
    opts: &EpisodeOptions,
) -> Result<EpisodeResult> {
    env.record_trace(opts.trace);
    let mut obs = env.reset()?;
    let mut out = EpisodeResult::default();
    let mut err_sum = [0.0; 2];
    loop {
        let action = act(agent, &obs, opts.deterministic, rng)?;
        if let Some(spec) = opts.disturbance {
            apply_disturbance(env.world_mut(), spec, out.steps);
        }
        let step = env.step(&action)?;
        out.steps += 1;
        out.total_reward += step.reward;
        for i in 0..2 {
            err_sum[i] += step.info.force_error[i];
        }
        out.max_contact_force = out.max_contact_force.max(step.info.max_env_force);
        out.final_position_error = step.info.position_error;
        out.success = step.info.success();
        out.safety_violation = step.info.safety_violation();
        if opts.keep_infos {
            out.infos.push(step.info.clone());
        }
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let n = out.steps.max(1) as f64;
    out.force_error = [err_sum[0] / n, err_sum[1] / n];
    out.trace = env.take_trace();
    env.record_trace(false);
    Ok(out)
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Table-style aggregate over a set of episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub safety_violations: usize,
    pub mean_reward: f64,
    pub mean_return: f64,
    pub force_error: [f64; 2],
    pub force_error_std: [f64; 2],
    pub position_error_mm: f64,
    pub position_error_std_mm: f64,
    /// Largest contact force over all episodes, N.
    pub max_contact_force: f64,
    /// Mean over episodes of each episode's largest contact force, N.
    pub mean_max_contact_force: f64,
    /// Mean episode length over successful episodes.
    pub mean_success_steps: Option<f64>,
}

pub fn summarize(results: &[EpisodeResult]) -> Summary {
    let n = results.len();
    if n == 0 {
        return Summary::default();
    }
    let successes = results.iter().filter(|r| r.success).count();
    let f = [0, 1].map(|i| mean_std(results.iter().map(move |r| r.force_error[i])));
    let (pos, pos_std) = mean_std(results.iter().map(|r| r.final_position_error * 1e3));
    let success_steps: Vec<f64> = results.iter().filter(|r| r.success).map(|r| r.steps as f64).collect();
    Summary {
        episodes: n,
        successes,
        success_rate: successes as f64 / n as f64,
        safety_violations: results.iter().filter(|r| r.safety_violation).count(),
        mean_reward: results.iter().map(|r| r.mean_reward()).sum::<f64>() / n as f64,
        mean_return: results.iter().map(|r| r.total_reward).sum::<f64>() / n as f64,
        force_error: [f[0].0, f[1].0],
        force_error_std: [f[0].1, f[1].1],
        position_error_mm: pos,
        position_error_std_mm: pos_std,
        max_contact_force: results.iter().map(|r| r.max_contact_force).fold(0.0, f64::max),
        mean_max_contact_force: results.iter().map(|r| r.max_contact_force).sum::<f64>() / n as f64,
        mean_success_steps: (!success_steps.is_empty())
            .then(|| success_steps.iter().sum::<f64>() / success_steps.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(success: bool, steps: usize, pos: f64, force: f64) -> EpisodeResult {
        EpisodeResult {
            total_reward: steps as f64,
            steps,
            success,
            force_error: [1.0, 3.0],
            final_position_error: pos,
            max_contact_force: force,
            ..Default::default()
        }
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[ep(true, 100, 0.001, 5.0), ep(false, 300, 0.003, 25.0)]);
        assert_eq!((s.episodes, s.successes), (2, 1));
        assert_eq!(s.success_rate, 0.5);
        assert!((s.position_error_mm - 2.0).abs() < 1e-12);
        assert!((s.position_error_std_mm - 1.0).abs() < 1e-12);
        assert_eq!(s.max_contact_force, 25.0);
        assert_eq!(s.mean_max_contact_force, 15.0);
        assert_eq!(s.mean_success_steps, Some(100.0));
        assert_eq!(s.force_error, [1.0, 3.0]);
        assert_eq!(s.mean_reward, 1.0);
    }

    #[test]
    fn empty_summary() {
        let s = summarize(&[]);
        assert_eq!(s.episodes, 0);
        assert_eq!(s.mean_success_steps, None);
    }
}
