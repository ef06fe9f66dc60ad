//! Run configuration: one JSON document covering every module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{AssemblyEnv, AssemblyEnvConfig, Environment, HandlingEnv, HandlingEnvConfig, PipelineGraph, Task, Variant};
use crate::error::{LacError, Result};
use crate::rl::checkpoint::hex;
use crate::rl::SacConfig;
use crate::sim::{DisturbanceSpec, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Agent steps between evaluations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Agent steps between loss records.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eval_every: 5000,
            eval_episodes: 20,
            log_every: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Episodes per evaluation; 50 for handling and 20 for assembly when
    /// unset.
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub disturbance: DisturbanceSpec,
    /// Episode length for the robustness runs, long enough for the last
    /// pulse to play out.
    pub episode_len: usize,
    pub episodes: usize,
    /// Steps before a pulse whose force error defines the quiet band.
    pub band_window: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            disturbance: DisturbanceSpec {
                trigger_steps: vec![50, 200],
                scale: 0.5,
                seed: 0,
            },
            episode_len: 300,
            episodes: 20,
            band_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Multipliers on the hole stiffness: small, large.
    pub stiffness_factors: [f64; 2],
    /// Multipliers on the hole damping: small, large.
    pub damping_factors: [f64; 2],
    pub episodes: usize,
    /// Hidden hole-centre error range for the offset scenario, m.
    pub hole_offset: [f64; 2],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            stiffness_factors: [0.2, 5.0],
            damping_factors: [0.2, 5.0],
            episodes: 20,
            hole_offset: [0.001, 0.005],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    pub variant: Variant,
    pub seed: u64,
    /// Training length; 3e5 for handling and 5e5 for assembly when unset.
    pub max_steps: Option<u64>,
    pub output_dir: PathBuf,
    pub sim: SimConfig,
    pub handling: HandlingEnvConfig,
    pub assembly: AssemblyEnvConfig,
    pub agent: SacConfig,
    pub train: TrainConfig,
    pub evaluation: EvalConfig,
    pub robustness: RobustnessConfig,
    pub grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Handling,
            variant: Variant::Lac,
            seed: 0,
            max_steps: None,
            output_dir: PathBuf::from("runs/default"),
            sim: SimConfig::default(),
            handling: HandlingEnvConfig::default(),
            assembly: AssemblyEnvConfig::default(),
            agent: SacConfig::default(),
            train: TrainConfig::default(),
            evaluation: EvalConfig::default(),
            robustness: RobustnessConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

/// The part of the config that fixes what a checkpoint means.
#[derive(Serialize)]
struct HashView<'a> {
    task: Task,
    variant: Variant,
    sim: &'a SimConfig,
    env: serde_json::Value,
    agent: &'a SacConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| LacError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LacError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            LacError::Config(m) => LacError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let err = LacError::Config;
        self.sim.validate().map_err(err)?;
        self.handling.validate().map_err(err)?;
        self.assembly.validate(&self.sim).map_err(err)?;
        self.agent.validate().map_err(err)?;
        self.robustness.disturbance.validate().map_err(err)?;
        if self.train.eval_every == 0 || self.train.log_every == 0 {
            return Err(err("train.eval_every and train.log_every must be positive".into()));
        }
        if self.robustness.episode_len == 0 {
            return Err(err("robustness.episode_len must be positive".into()));
        }
        let g = &self.grid;
        if g.stiffness_factors.iter().chain(&g.damping_factors).any(|f| !(*f > 0.0)) {
            return Err(err("grid factors must be positive".into()));
        }
        if !(g.hole_offset[0] >= 0.0 && g.hole_offset[0] <= g.hole_offset[1]) {
            return Err(err("grid.hole_offset must be an ordered non-negative range".into()));
        }
        Ok(())
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps.unwrap_or(match self.task {
            Task::Handling => 300_000,
            Task::Assembly => 500_000,
        })
    }

    pub fn eval_episodes(&self) -> usize {
        self.evaluation.episodes.unwrap_or(match self.task {
            Task::Handling => 50,
            Task::Assembly => 20,
        })
    }

    pub fn graph(&self) -> PipelineGraph {
        PipelineGraph::build(self.task, self.variant)
    }

    /// SHA-256 over task, variant, simulation, the active task's
    /// environment and the agent. Seeds, paths and schedules are left out so
    /// a checkpoint stays usable across evaluation settings.
    pub fn hash(&self) -> String {
        let env = match self.task {
            Task::Handling => serde_json::to_value(&self.handling),
            Task::Assembly => serde_json::to_value(&self.assembly),
        }
        .expect("env config serializes");
        let view = HashView {
            task: self.task,
            variant: self.variant,
            sim: &self.sim,
            env,
            agent: &self.agent,
        };
        hex(&Sha256::digest(serde_json::to_vec(&view).expect("hash view serializes")))
    }

    pub fn make_env(&self, seed: u64) -> Result<Box<dyn Environment>> {
        self.make_env_with(self.sim.clone(), self.handling.clone(), self.assembly.clone(), seed)
    }

    pub fn make_env_with(
        &self,
        sim: SimConfig,
        handling: HandlingEnvConfig,
        assembly: AssemblyEnvConfig,
        seed: u64,
    ) -> Result<Box<dyn Environment>> {
        Ok(match self.task {
            Task::Handling => Box::new(HandlingEnv::new(handling, sim, self.variant, seed)?),
            Task::Assembly => Box::new(AssemblyEnv::new(assembly, sim, self.variant, seed)?),
        })
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    pub max_steps: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.max_steps {
            cfg.max_steps = Some(m);
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.sim.pads.friction = 0.1 + 0.2;
        cfg.handling.reward.sigma_d = 1.0 / 3.0;
        cfg.variant = Variant::NoLstm;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"task": "handling", "speed": 3}"#).unwrap_err();
        assert!(matches!(err, LacError::Config(_)));
        let err = RunConfig::from_json(r#"{"sim": {"pads": {"stifness": 1.0}}}"#).unwrap_err();
        assert!(matches!(err, LacError::Config(_)));
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = RunConfig::from_json(r#"{"task": "assembly", "variant": "fixed-imp", "seed": 4}"#).unwrap();
        assert_eq!(cfg.task, Task::Assembly);
        assert_eq!(cfg.max_steps(), 500_000);
        assert_eq!(cfg.eval_episodes(), 20);
        assert_eq!(cfg.graph().action_dim, 3);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"sim": {"pads": {"friction": 3.0}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"handling": {"reward": {"f_min": 60.0}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"assembly": {"insertion_depth": 0.2}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"variant": "both"}"#).is_err());
    }

    #[test]
    fn hash_ignores_schedule_but_not_physics() {
        let base = RunConfig::default();
        let mut other = base.clone();
        other.seed = 99;
        other.output_dir = "elsewhere".into();
        other.train.eval_every = 10;
        other.assembly.insertion_depth = 0.02;
        assert_eq!(base.hash(), other.hash());
        other.handling.max_delta = 0.02;
        assert_ne!(base.hash(), other.hash());
        let mut v = base.clone();
        v.variant = Variant::FixedImp;
        assert_ne!(base.hash(), v.hash());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = RunConfig::default();
        Overrides {
            variant: Some(Variant::NoImp),
            seed: Some(3),
            max_steps: Some(10),
            output_dir: Some("x".into()),
        }
        .apply(&mut cfg);
        assert_eq!((cfg.variant, cfg.seed, cfg.max_steps(), cfg.output_dir.as_path()), (Variant::NoImp, 3, 10, Path::new("x")));
    }
}
