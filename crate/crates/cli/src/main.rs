use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lac_core::envs::Variant;
use lac_core::harness::{self, Overrides, RunConfig, Scenario};
use lac_core::LacError;

#[derive(Parser)]
#[command(name = "lac", version, about = "Train and evaluate adaptive-compliance policies for dual-arm manipulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoints plus metrics.
    Train(Common),
    /// Roll out a checkpoint deterministically.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Episode count; defaults to the config's evaluation setting.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum, default_value_t = ScenarioArg::Nominal)]
        scenario: ScenarioArg,
    },
    /// Disturbance test on a handling checkpoint.
    Robustness(Common),
    /// Stiffness/damping grid and hole-offset scenario on an assembly checkpoint.
    Grid(Common),
    /// Write tidy CSVs for everything logged under the output directory.
    Export(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to load; defaults to <out>/checkpoints/final.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Nominal,
    HoleOffset,
}

impl Common {
    fn config(&self) -> lac_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Overrides {
            variant: self.variant,
            seed: self.seed,
            max_steps: self.max_steps,
            output_dir: self.out.clone(),
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn checkpoint(&self, cfg: &RunConfig) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| cfg.output_dir.join("checkpoints").join("final.ckpt"))
    }
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
}

fn run(cli: Cli) -> lac_core::Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.config()?;
            let out = harness::train(&cfg)?;
            print(serde_json::json!({
                "steps": out.steps,
                "episodes": out.episodes,
                "updates": out.updates,
                "checkpoint": out.checkpoint,
                "metrics": out.metrics,
                "last_eval": out.last_eval,
            }));
        }
        Command::Evaluate { common, episodes, scenario } => {
            let cfg = common.config()?;
            let scenario = match scenario {
                ScenarioArg::Nominal => Scenario::Nominal,
                ScenarioArg::HoleOffset => Scenario::HoleOffset(cfg.grid.hole_offset),
            };
            let n = episodes.unwrap_or_else(|| cfg.eval_episodes());
            let report = harness::evaluate(&cfg, &common.checkpoint(&cfg), n, &scenario)?;
            print(serde_json::json!({
                "checkpoint_step": report.checkpoint_step,
                "scenario": report.scenario.name(),
                "summary": report.summary,
            }));
        }
        Command::Robustness(c) => {
            let cfg = c.config()?;
            let report = harness::robustness_test(&cfg, &c.checkpoint(&cfg))?;
            print(serde_json::json!({
                "max_decay_time": report.max_decay_time,
                "max_final_delta_mm": report.max_final_delta_mm,
                "undisturbed": report.undisturbed,
                "disturbed": report.disturbed,
            }));
        }
        Command::Grid(c) => {
            let cfg = c.config()?;
            let report = harness::generalization_grid(&cfg, &c.checkpoint(&cfg))?;
            print!("{}", report.csv());
        }
        Command::Export(c) => {
            let cfg = c.config()?;
            let report = harness::export_plots(&cfg.output_dir)?;
            for f in report.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &LacError) -> u8 {
    match e {
        LacError::Config(_) | LacError::Json(_) => 2,
        e if e.is_numeric() => 3,
        LacError::ChecksumMismatch(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
