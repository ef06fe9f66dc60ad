//! The training loop: rollouts at the agent rate, replay, periodic
//! evaluation and checkpoints.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;

use super::config::RunConfig;
use super::metrics::{MetricsRecord, MetricsWriter, RecordKind, TimingRecord};
use super::rollout::{act, run_episode, summarize, to_f32, EpisodeOptions, Summary};
use super::{derive_seed, register_artifacts, stream_rng, Stream};
use crate::error::{LacError, Result};
use crate::rl::{checkpoint, LossReport, ReplayBuffer, SacAgent, Transition};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub last_eval: Option<Summary>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

pub fn new_agent(cfg: &RunConfig) -> Result<SacAgent<f32>> {
    let env = cfg.make_env(0)?;
    let graph = cfg.graph();
    let mut rng = stream_rng(cfg.seed, Stream::Init);
    Ok(SacAgent::new(
        cfg.agent.clone(),
        graph.encoder,
        env.spec().dims(),
        graph.action_dim,
        &mut rng,
    ))
}

fn with_context(e: LacError, step: u64, seed: u64) -> LacError {
    match e {
        LacError::NonFiniteLoss { update, detail } => LacError::NonFiniteLoss {
            update,
            detail: format!("{detail} (training step {step}, seed {seed})"),
        },
        LacError::NonFiniteState { time, what } => LacError::NonFiniteState {
            time,
            what: format!("{what} (training step {step}, seed {seed})"),
        },
        other => other,
    }
}

pub(crate) fn base_record(cfg: &RunConfig, hash: &str, kind: RecordKind) -> MetricsRecord {
    MetricsRecord {
        kind,
        config_hash: hash.to_owned(),
        task: cfg.task.to_string(),
        variant: cfg.variant.to_string(),
        seed: cfg.seed,
        step: 0,
        episode: 0,
        mean_reward: 0.0,
        success: 0.0,
        force_error: [0.0; 2],
        force_error_std: None,
        position_error_mm: 0.0,
        position_error_std_mm: None,
        max_contact_force: 0.0,
        assembly_steps: None,
        scenario: None,
        losses: None,
    }
}

pub(crate) fn summary_record(cfg: &RunConfig, hash: &str, kind: RecordKind, step: u64, s: &Summary) -> MetricsRecord {
    MetricsRecord {
        step,
        episode: s.episodes as u64,
        mean_reward: s.mean_reward,
        success: s.success_rate,
        force_error: s.force_error,
        force_error_std: Some(s.force_error_std),
        position_error_mm: s.position_error_mm,
        position_error_std_mm: Some(s.position_error_std_mm),
        max_contact_force: s.max_contact_force,
        assembly_steps: s.mean_success_steps,
        ..base_record(cfg, hash, kind)
    }
}

/// Deterministic evaluation with a fresh environment on a fixed seed, so
/// every evaluation sees the same episodes.
pub fn evaluate_agent(cfg: &RunConfig, agent: &SacAgent<f32>, episodes: usize) -> Result<Summary> {
    let mut env = cfg.make_env(derive_seed(cfg.seed, Stream::EvalEnv))?;
    let mut rng = stream_rng(cfg.seed, Stream::Eval);
    let mut results = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        results.push(run_episode(env.as_mut(), agent, &mut rng, &EpisodeOptions::default())?);
    }
    Ok(summarize(&results))
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| LacError::io(format!("creating {}", out.display()), e))?;
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| LacError::io(format!("writing {}", cfg_path.display()), e))?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = MetricsWriter::create(&metrics_path)?;
    let mut timing = MetricsWriter::create(&out.join("timing.jsonl"))?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| LacError::io(format!("creating {}", ckpt_dir.display()), e))?;

    let mut agent = new_agent(cfg)?;
    let mut env = cfg.make_env(derive_seed(cfg.seed, Stream::TrainEnv))?;
    let dims = env.spec().dims();
    let action_dim = env.action_dim();
    let mut buffer = ReplayBuffer::new(cfg.agent.buffer_capacity, dims.motion, dims.series(), action_dim);
    let mut act_rng = stream_rng(cfg.seed, Stream::Act);
    let mut update_rng = stream_rng(cfg.seed, Stream::Update);

    let max_steps = cfg.max_steps();
    let warmup = cfg.agent.warmup_steps as u64;
    let started = Instant::now();
    let mut obs = env.reset()?;
    let mut obs32 = (to_f32(&obs.motion), to_f32(&obs.series));
    let mut episode = 0u64;
    let mut ep_reward = 0.0;
    let mut ep_steps = 0usize;
    let mut ep_err = [0.0; 2];
    let mut ep_max_force = 0.0f64;
    let mut last_loss: Option<LossReport> = None;
    let mut last_eval = None;
    let mut best = f64::NEG_INFINITY;

    for t in 0..max_steps {
        let action: Vec<f64> = if t < warmup {
            (0..action_dim).map(|_| act_rng.random_range(-1.0..1.0)).collect()
        } else {
            act(&agent, &obs, false, &mut act_rng)?
        };
        let step = env.step(&action).map_err(|e| with_context(e, t, cfg.seed))?;
        let next32 = (to_f32(&step.observation.motion), to_f32(&step.observation.series));
        buffer.push(Transition {
            m: &obs32.0,
            f: &obs32.1,
            action: &to_f32(&action),
            reward: step.reward as f32,
            next_m: &next32.0,
            next_f: &next32.1,
            done: step.terminal,
        });
        ep_reward += step.reward;
        ep_steps += 1;
        for i in 0..2 {
            ep_err[i] += step.info.force_error[i];
        }
        ep_max_force = ep_max_force.max(step.info.max_env_force);

        if step.done {
            let n = ep_steps as f64;
            metrics.write(&MetricsRecord {
                step: t + 1,
                episode,
                mean_reward: ep_reward / n,
                success: if step.info.success() { 1.0 } else { 0.0 },
                force_error: [ep_err[0] / n, ep_err[1] / n],
                position_error_mm: step.info.position_error * 1e3,
                max_contact_force: ep_max_force,
                assembly_steps: step.info.success().then_some(n),
                ..base_record(cfg, &hash, RecordKind::Train)
            })?;
            episode += 1;
            ep_reward = 0.0;
            ep_steps = 0;
            ep_err = [0.0; 2];
            ep_max_force = 0.0;
            obs = env.reset()?;
            obs32 = (to_f32(&obs.motion), to_f32(&obs.series));
        } else {
            obs = step.observation;
            obs32 = next32;
        }

        if t + 1 >= warmup && buffer.len() >= cfg.agent.batch_size {
            for _ in 0..cfg.agent.updates_per_step {
                let batch = buffer.sample(cfg.agent.batch_size, &mut update_rng)?;
                last_loss = Some(agent.update(&batch, &mut update_rng).map_err(|e| with_context(e, t, cfg.seed))?);
            }
        }

        let done_steps = t + 1;
        if done_steps % cfg.train.log_every == 0 {
            if let Some(l) = last_loss {
                metrics.write(&MetricsRecord {
                    step: done_steps,
                    episode,
                    losses: Some(l),
                    ..base_record(cfg, &hash, RecordKind::Update)
                })?;
            }
        }
        if done_steps % cfg.train.eval_every == 0 || done_steps == max_steps {
            let s = evaluate_agent(cfg, &agent, cfg.train.eval_episodes)?;
            metrics.write(&summary_record(cfg, &hash, RecordKind::Eval, done_steps, &s))?;
            timing.write(&TimingRecord {
                kind: "eval".into(),
                step: done_steps,
                wall_time_s: started.elapsed().as_secs_f64(),
            })?;
            checkpoint::save(&agent, &ckpt_dir.join("latest.ckpt"), &hash, done_steps)?;
            if s.mean_reward > best {
                best = s.mean_reward;
                checkpoint::save(&agent, &ckpt_dir.join("best.ckpt"), &hash, done_steps)?;
            }
            last_eval = Some(s);
        }
    }

    let final_path = ckpt_dir.join("final.ckpt");
    checkpoint::save(&agent, &final_path, &hash, max_steps)?;
    timing.write(&TimingRecord {
        kind: "total".into(),
        step: max_steps,
        wall_time_s: started.elapsed().as_secs_f64(),
    })?;
    register_artifacts(
        &out,
        &hash,
        &["config.json", "metrics.jsonl", "timing.jsonl", "checkpoints/final.ckpt"],
    )?;
    Ok(TrainOutcome {
        steps: max_steps,
        episodes: episode,
        updates: agent.updates,
        last_eval,
        checkpoint: final_path,
        metrics: metrics_path,
    })
}

/// Builds an agent for `cfg` and loads `path` into it; refuses checkpoints
/// written under a different config hash.
pub fn load_agent(cfg: &RunConfig, path: &std::path::Path) -> Result<(SacAgent<f32>, u64)> {
    let mut agent = new_agent(cfg)?;
    let step = checkpoint::load(&mut agent, path, &cfg.hash())?;
    Ok((agent, step))
}
