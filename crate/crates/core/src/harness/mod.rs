//! Orchestration: training, evaluation, robustness and generalization
//! experiments, and export of tidy CSVs.

pub mod config;
pub mod evaluate;
pub mod export;
pub mod metrics;
pub mod rollout;
pub mod train;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LacError, Result};

pub use config::{Overrides, RunConfig};
pub use evaluate::{evaluate, generalization_grid, robustness_test, Scenario};
pub use export::export_plots;
pub use metrics::{MetricsRecord, MetricsWriter, RecordKind};
pub use rollout::{EpisodeResult, Summary};
pub use train::{load_agent, train};

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Init = 1,
    Act = 2,
    Update = 3,
    TrainEnv = 4,
    EvalEnv = 5,
    Eval = 6,
    TestEnv = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    use rand::Rng;
    stream_rng(seed, stream).random()
}

/// Records which config hash produced each artifact in `dir/artifacts.json`.
pub fn register_artifacts(dir: &Path, hash: &str, files: &[&str]) -> Result<()> {
    let path = dir.join("artifacts.json");
    let mut map: BTreeMap<String, String> = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    for f in files {
        map.insert((*f).to_owned(), hash.to_owned());
    }
    let text = serde_json::to_string_pretty(&map)?;
    std::fs::write(&path, text).map_err(|e| LacError::io(format!("writing {}", path.display()), e))
}
