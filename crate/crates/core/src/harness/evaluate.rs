//! Standalone evaluation commands: plain evaluation, disturbance
//! robustness, and the stiffness/damping generalization grid.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{MetricsRecord, MetricsWriter, RecordKind};
use super::rollout::{run_episode, summarize, EpisodeOptions, EpisodeResult, Summary};
use super::train::{base_record, load_agent, summary_record};
use super::{derive_seed, register_artifacts, stream_rng, Stream};
use crate::envs::{Environment, Task, TraceRow, TRACE_HEADER};
use crate::error::{LacError, Result};
use crate::rl::SacAgent;
use crate::sim::DisturbanceSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Nominal,
    /// Hidden hole-centre error drawn from this range, m.
    HoleOffset([f64; 2]),
    /// Hole stiffness and damping multipliers.
    Contact { stiffness: f64, damping: f64 },
}

impl Scenario {
    pub fn name(&self) -> String {
        match self {
            Scenario::Nominal => "nominal".into(),
            Scenario::HoleOffset(_) => "hole-offset".into(),
            Scenario::Contact { stiffness, damping } => format!("k{stiffness}-b{damping}"),
        }
    }
}

fn scenario_env(cfg: &RunConfig, scenario: &Scenario, seed: u64, episode_len: Option<usize>) -> Result<Box<dyn Environment>> {
    let mut sim = cfg.sim.clone();
    let mut handling = cfg.handling.clone();
    let mut assembly = cfg.assembly.clone();
    match scenario {
        Scenario::Nominal => {}
        Scenario::HoleOffset(r) => assembly.hole_offset = Some(*r),
        Scenario::Contact { stiffness, damping } => {
            sim.hole.stiffness *= stiffness;
            sim.hole.damping *= damping;
        }
    }
    if let Some(n) = episode_len {
        handling.episode_len = n;
        assembly.episode_len = n;
    }
    cfg.make_env_with(sim, handling, assembly, seed)
}

fn io_err(path: &Path, e: std::io::Error) -> LacError {
    LacError::io(format!("writing {}", path.display()), e)
}

pub fn write_trajectory(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 160);
    text.push_str(TRACE_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn episode_record(cfg: &RunConfig, hash: &str, step: u64, index: usize, r: &EpisodeResult, scenario: &str) -> MetricsRecord {
    MetricsRecord {
        step,
        episode: index as u64,
        mean_reward: r.mean_reward(),
        success: if r.success { 1.0 } else { 0.0 },
        force_error: r.force_error,
        position_error_mm: r.final_position_error * 1e3,
        max_contact_force: r.max_contact_force,
        assembly_steps: r.success.then_some(r.steps as f64),
        scenario: Some(scenario.to_owned()),
        ..base_record(cfg, hash, RecordKind::Episode)
    }
}

/// Runs `episodes` episodes; traces are kept for the first successful one
/// (or the first one if none succeeds).
fn run_set(
    cfg: &RunConfig,
    agent: &SacAgent<f32>,
    env: &mut dyn Environment,
    episodes: usize,
    disturbance: Option<&DisturbanceSpec>,
    keep_infos: bool,
) -> Result<(Vec<EpisodeResult>, Vec<TraceRow>)> {
    let mut rng = stream_rng(cfg.seed, Stream::Eval);
    let mut results = Vec::with_capacity(episodes);
    let mut kept: Option<(bool, Vec<TraceRow>)> = None;
    for i in 0..episodes {
        let spec = disturbance.map(|d| DisturbanceSpec {
            seed: d.seed.wrapping_add(i as u64),
            ..d.clone()
        });
        let want_trace = !matches!(kept, Some((true, _)));
        let opts = EpisodeOptions {
            deterministic: true,
            disturbance: spec.as_ref(),
            keep_infos,
            trace: want_trace,
        };
        let mut r = run_episode(env, agent, &mut rng, &opts)?;
        if want_trace && (kept.is_none() || r.success) {
            kept = Some((r.success, std::mem::take(&mut r.trace)));
        }
        r.trace.clear();
        results.push(r);
    }
    Ok((results, kept.map(|k| k.1).unwrap_or_default()))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub checkpoint_step: u64,
    pub scenario: Scenario,
    pub summary: Summary,
    pub episodes: Vec<EpisodeResult>,
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, episodes: usize, scenario: &Scenario) -> Result<EvalReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let (agent, step) = load_agent(cfg, checkpoint)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut env = scenario_env(cfg, scenario, derive_seed(cfg.seed, Stream::TestEnv), None)?;
    let (results, trace) = run_set(cfg, &agent, env.as_mut(), episodes, None, false)?;
    let name = scenario.name();
    let mut w = MetricsWriter::create(&out.join("evaluate.jsonl"))?;
    for (i, r) in results.iter().enumerate() {
        w.write(&episode_record(cfg, &hash, step, i, r, &name))?;
    }
    let summary = summarize(&results);
    let mut files = vec!["evaluate.jsonl"];
    if !results.is_empty() {
        w.write(&MetricsRecord {
            scenario: Some(name),
            ..summary_record(cfg, &hash, RecordKind::Summary, step, &summary)
        })?;
        write_trajectory(&out.join("trajectory.csv"), &trace)?;
        files.push("trajectory.csv");
    }
    register_artifacts(out, &hash, &files)?;
    Ok(EvalReport {
        checkpoint_step: step,
        scenario: scenario.clone(),
        summary,
        episodes: results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseStat {
    pub episode: usize,
    pub step: usize,
    /// Largest mean force error over the window before the pulse, N.
    pub band: f64,
    pub peak: f64,
    /// Steps from the pulse until the force error is back inside the band.
    pub decay_steps: Option<usize>,
    pub decay_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config_hash: String,
    pub checkpoint_step: u64,
    pub undisturbed: Summary,
    pub disturbed: Summary,
    pub pulses: Vec<PulseStat>,
    /// Per episode, |final error disturbed − final error undisturbed|, mm.
    pub final_delta_mm: Vec<f64>,
    pub max_final_delta_mm: f64,
    /// Slowest decay over all pulses; `None` if any pulse never decayed.
    pub max_decay_time: Option<f64>,
}

fn mean_error(r: &EpisodeResult) -> Vec<f64> {
    r.infos.iter().map(|i| (i.force_error[0] + i.force_error[1]) / 2.0).collect()
}

pub fn pulse_stats(errors: &[f64], pulse: usize, window: usize, period: f64, episode: usize) -> Option<PulseStat> {
    if pulse >= errors.len() || pulse == 0 {
        return None;
    }
    let lo = pulse.saturating_sub(window);
    let band = errors[lo..pulse].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peak = errors[pulse..].iter().take(window.max(1) * 2).copied().fold(0.0, f64::max);
    let decay_steps = errors[pulse..].iter().position(|e| *e <= band);
    Some(PulseStat {
        episode,
        step: pulse,
        band,
        peak,
        decay_steps,
        decay_time: decay_steps.map(|k| k as f64 * period),
    })
}

pub fn robustness_test(cfg: &RunConfig, checkpoint: &Path) -> Result<RobustnessReport> {
    cfg.validate()?;
    if cfg.task != Task::Handling {
        return Err(LacError::Config("robustness runs on the handling task".into()));
    }
    let hash = cfg.hash();
    let (agent, step) = load_agent(cfg, checkpoint)?;
    let rc = &cfg.robustness;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let seed = derive_seed(cfg.seed, Stream::TestEnv);
    let mut env_u = scenario_env(cfg, &Scenario::Nominal, seed, Some(rc.episode_len))?;
    let mut env_d = scenario_env(cfg, &Scenario::Nominal, seed, Some(rc.episode_len))?;
    let (undisturbed, trace_u) = run_set(cfg, &agent, env_u.as_mut(), rc.episodes, None, true)?;
    let (disturbed, trace_d) = run_set(cfg, &agent, env_d.as_mut(), rc.episodes, Some(&rc.disturbance), true)?;

    let period = 1.0 / cfg.handling.high_rate;
    let mut pulses = Vec::new();
    let mut deltas = Vec::new();
    let mut series = String::from("episode,scenario,step,force_error_1,force_error_2,position_error\n");
    let mut w = MetricsWriter::create(&out.join("robustness.jsonl"))?;
    for (i, (u, d)) in undisturbed.iter().zip(&disturbed).enumerate() {
        let errs = mean_error(d);
        for &p in &rc.disturbance.trigger_steps {
            if rc.disturbance.scale > 0.0 {
                pulses.extend(pulse_stats(&errs, p, rc.band_window, period, i));
            }
        }
        deltas.push((d.final_position_error - u.final_position_error).abs() * 1e3);
        for (name, r) in [("undisturbed", u), ("disturbed", d)] {
            w.write(&episode_record(cfg, &hash, step, i, r, name))?;
            for info in &r.infos {
                let _ = writeln!(
                    series,
                    "{i},{name},{},{:.9},{:.9},{:.9}",
                    info.step, info.force_error[0], info.force_error[1], info.position_error
                );
            }
        }
    }
    let su = summarize(&undisturbed);
    let sd = summarize(&disturbed);
    for (name, s) in [("undisturbed", &su), ("disturbed", &sd)] {
        w.write(&MetricsRecord {
            scenario: Some(name.into()),
            ..summary_record(cfg, &hash, RecordKind::Summary, step, s)
        })?;
    }
    let series_path = out.join("robustness_series.csv");
    std::fs::write(&series_path, series).map_err(|e| io_err(&series_path, e))?;
    write_trajectory(&out.join("trajectory_undisturbed.csv"), &trace_u)?;
    write_trajectory(&out.join("trajectory_disturbed.csv"), &trace_d)?;
    let max_decay_time = pulses
        .iter()
        .map(|p| p.decay_time)
        .try_fold(0.0f64, |m, t| t.map(|t| m.max(t)));
    let report = RobustnessReport {
        config_hash: hash.clone(),
        checkpoint_step: step,
        undisturbed: su,
        disturbed: sd,
        pulses,
        max_final_delta_mm: deltas.iter().copied().fold(0.0, f64::max),
        final_delta_mm: deltas,
        max_decay_time,
    };
    let json_path = out.join("robustness.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?).map_err(|e| io_err(&json_path, e))?;
    register_artifacts(
        out,
        &hash,
        &[
            "robustness.jsonl",
            "robustness.json",
            "robustness_series.csv",
            "trajectory_undisturbed.csv",
            "trajectory_disturbed.csv",
        ],
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub name: String,
    pub scenario: Scenario,
    pub summary: Summary,
    /// Some episode exceeded the contact-force limit.
    pub exceeds_force_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub config_hash: String,
    pub checkpoint_step: u64,
    pub force_limit: f64,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    /// Table with one row per cell; assembly steps read `None` where the
    /// force limit was exceeded.
    pub fn csv(&self) -> String {
        let mut s = String::from(
            "cell,stiffness_factor,damping_factor,episodes,successes,max_contact_force,mean_max_contact_force,assembly_steps\n",
        );
        for c in &self.cells {
            let (k, b) = match c.scenario {
                Scenario::Contact { stiffness, damping } => (stiffness.to_string(), damping.to_string()),
                _ => ("1".into(), "1".into()),
            };
            let steps = match (c.exceeds_force_limit, c.summary.mean_success_steps) {
                (false, Some(v)) => format!("{v:.1}"),
                _ => "None".into(),
            };
            let _ = writeln!(
                s,
                "{},{k},{b},{},{},{:.4},{:.4},{steps}",
                c.name, c.summary.episodes, c.summary.successes, c.summary.max_contact_force, c.summary.mean_max_contact_force
            );
        }
        s
    }
}

pub fn generalization_grid(cfg: &RunConfig, checkpoint: &Path) -> Result<GridReport> {
    cfg.validate()?;
    if cfg.task != Task::Assembly {
        return Err(LacError::Config("the generalization grid runs on the assembly task".into()));
    }
    let hash = cfg.hash();
    let (agent, step) = load_agent(cfg, checkpoint)?;
    let g = &cfg.grid;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut scenarios = Vec::new();
    for &k in &g.stiffness_factors {
        for &b in &g.damping_factors {
            scenarios.push(Scenario::Contact { stiffness: k, damping: b });
        }
    }
    scenarios.push(Scenario::HoleOffset(g.hole_offset));
    let limit = cfg.assembly.reward.f_max;
    let seed = derive_seed(cfg.seed, Stream::TestEnv);
    let mut w = MetricsWriter::create(&out.join("grid.jsonl"))?;
    let mut cells = Vec::new();
    for sc in scenarios {
        let mut env = scenario_env(cfg, &sc, seed, None)?;
        let (results, _) = run_set(cfg, &agent, env.as_mut(), g.episodes, None, false)?;
        let summary = summarize(&results);
        let name = sc.name();
        for (i, r) in results.iter().enumerate() {
            w.write(&episode_record(cfg, &hash, step, i, r, &name))?;
        }
        w.write(&MetricsRecord {
            scenario: Some(name.clone()),
            ..summary_record(cfg, &hash, RecordKind::Summary, step, &summary)
        })?;
        cells.push(GridCell {
            name,
            scenario: sc,
            exceeds_force_limit: summary.max_contact_force > limit,
            summary,
        });
    }
    let report = GridReport {
        config_hash: hash.clone(),
        checkpoint_step: step,
        force_limit: limit,
        cells,
    };
    let csv_path = out.join("grid.csv");
    let mut f = std::fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    f.write_all(report.csv().as_bytes()).map_err(|e| io_err(&csv_path, e))?;
    let json_path = out.join("grid.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?).map_err(|e| io_err(&json_path, e))?;
    register_artifacts(out, &hash, &["grid.jsonl", "grid.csv", "grid.json"])?;
    Ok(report)
}
