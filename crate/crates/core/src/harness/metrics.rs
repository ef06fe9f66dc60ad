//! Append-only JSON-lines metrics.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LacError, Result};
use crate::rl::LossReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    /// One finished training episode.
    Train,
    /// Summary of a periodic evaluation during training.
    Eval,
    /// Loss snapshot.
    Update,
    /// One evaluation episode from a standalone command.
    Episode,
    /// Summary of a standalone evaluation or grid cell.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kind: RecordKind,
    pub config_hash: String,
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub step: u64,
    pub episode: u64,
    pub mean_reward: f64,
    /// Success flag (0 or 1) for one episode, rate for a summary.
    pub success: f64,
    /// Mean force error per arm, N.
    pub force_error: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_error_std: Option<[f64; 2]>,
    /// Final position error, mm. For assembly, remaining insertion.
    pub position_error_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_error_std_mm: Option<f64>,
    /// Largest environment contact force, N.
    pub max_contact_force: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembly_steps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<LossReport>,
}

/// Wall-clock side channel, kept apart so metrics stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub kind: String,
    pub step: u64,
    pub wall_time_s: f64,
}

/// Single writer; every record is flushed as one complete line.
pub struct MetricsWriter {
    file: File,
    path: PathBuf,
}

impl MetricsWriter {
    /// Starts a fresh file.
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| LacError::io(format!("creating {}", dir.display()), e))?;
        }
        let file = File::create(path).map_err(|e| LacError::io(format!("creating {}", path.display()), e))?;
        Ok(Self {
            file,
            path: path.to_owned(),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| LacError::io(format!("writing {}", self.path.display()), e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every complete record. A final line cut short by a crash is
/// skipped; a malformed line anywhere else is an error.
pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| LacError::io(format!("opening {}", path.display()), e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).split(b'\n') {
        lines.push(line.map_err(|e| LacError::io(format!("reading {}", path.display()), e))?);
    }
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, raw) in lines.iter().enumerate() {
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice(raw) {
            Ok(r) => out.push(r),
            Err(_) if i == last => {}
            Err(e) => {
                return Err(LacError::Config(format!("{} line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs::OpenOptions;

    fn record(step: u64) -> MetricsRecord {
        MetricsRecord {
            kind: RecordKind::Train,
            config_hash: "abc".into(),
            task: "handling".into(),
            variant: "lac".into(),
            seed: 1,
            step,
            episode: step / 200,
            mean_reward: 0.5,
            success: 1.0,
            force_error: [0.1, 0.2],
            force_error_std: None,
            position_error_mm: 3.0,
            position_error_std_mm: None,
            max_contact_force: 0.0,
            assembly_steps: None,
            scenario: None,
            losses: None,
        }
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut w = MetricsWriter::create(&p).unwrap();
        for s in 0..5 {
            w.write(&record(s)).unwrap();
        }
        let back: Vec<MetricsRecord> = read_records(&p).unwrap();
        assert_eq!(back, (0..5).map(record).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut w = MetricsWriter::create(&p).unwrap();
        w.write(&record(0)).unwrap();
        w.write(&record(1)).unwrap();
        drop(w);
        let full = serde_json::to_string(&record(2)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(&full.as_bytes()[..full.len() / 2]).unwrap();
        drop(f);
        let back: Vec<MetricsRecord> = read_records(&p).unwrap();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn malformed_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let good = serde_json::to_string(&record(0)).unwrap();
        std::fs::write(&p, format!("{good}\n{{\"kind\n{good}\n")).unwrap();
        assert!(read_records::<MetricsRecord>(&p).is_err());
    }

    #[test]
    fn optional_fields_stay_out_of_the_line() {
        let line = serde_json::to_string(&record(0)).unwrap();
        assert!(!line.contains("losses") && !line.contains("scenario"));
    }
}
