//! Tidy CSV export of everything a run directory tree has logged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{read_records, MetricsRecord, RecordKind};
use crate::error::{LacError, Result};

#[derive(Debug, Clone, Default)]
pub struct ExportReport {
    pub records: usize,
    pub files: Vec<PathBuf>,
}

fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| LacError::io(format!("reading {}", dir.display()), e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            walk(&p, found)?;
        } else {
            found.push(p);
        }
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| LacError::io(format!("writing {}", path.display()), e))
}

/// Reads every metrics file under `dir` and writes CSVs to `dir/export`.
pub fn export_plots(dir: &Path) -> Result<ExportReport> {
    let mut files = Vec::new();
    if dir.is_dir() {
        walk(dir, &mut files)?;
    }
    let mut records: Vec<(PathBuf, MetricsRecord)> = Vec::new();
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "jsonl")) {
        for v in read_records::<serde_json::Value>(f)? {
            if let Ok(r) = serde_json::from_value::<MetricsRecord>(v) {
                records.push((f.clone(), r));
            }
        }
    }
    if records.is_empty() {
        return Err(LacError::MissingMetrics(dir.to_path_buf()));
    }
    let out = dir.join("export");
    std::fs::create_dir_all(&out).map_err(|e| LacError::io(format!("creating {}", out.display()), e))?;
    let mut report = ExportReport {
        records: records.len(),
        files: Vec::new(),
    };

    // Reward curves: one value per (seed, step), aggregated across seeds.
    let mut curves: BTreeMap<(String, String), BTreeMap<u64, BTreeMap<u64, f64>>> = BTreeMap::new();
    for (_, r) in records.iter().filter(|(_, r)| r.kind == RecordKind::Eval) {
        curves
            .entry((r.task.clone(), r.variant.clone()))
            .or_default()
            .entry(r.step)
            .or_default()
            .insert(r.seed, r.mean_reward);
    }
    for ((task, variant), steps) in &curves {
        let mut s = String::from("step,mean_reward,std_reward,seeds\n");
        for (step, by_seed) in steps {
            let v: Vec<f64> = by_seed.values().copied().collect();
            let (m, sd) = mean_std(&v);
            let _ = writeln!(s, "{step},{m:.6},{sd:.6},{}", v.len());
        }
        let path = out.join(format!("reward_curve_{task}_{variant}.csv"));
        write(&path, &s)?;
        report.files.push(path);
    }

    let summaries: Vec<&(PathBuf, MetricsRecord)> = records.iter().filter(|(_, r)| r.kind == RecordKind::Summary).collect();
    let mut fe = String::from(
        "source,task,variant,seed,scenario,success_rate,force_error_1,force_error_2,force_error_std_1,force_error_std_2,position_error_mm,position_error_std_mm\n",
    );
    let mut cf = String::from("source,task,variant,seed,scenario,success_rate,max_contact_force,assembly_steps\n");
    for (src, r) in &summaries {
        let src = src.strip_prefix(dir).unwrap_or(src).display();
        let sc = r.scenario.as_deref().unwrap_or("");
        let [s1, s2] = r.force_error_std.map_or([None, None], |s| [Some(s[0]), Some(s[1])]);
        let _ = writeln!(
            fe,
            "{src},{},{},{},{sc},{:.6},{:.6},{:.6},{},{},{:.6},{}",
            r.task,
            r.variant,
            r.seed,
            r.success,
            r.force_error[0],
            r.force_error[1],
            opt(s1),
            opt(s2),
            r.position_error_mm,
            opt(r.position_error_std_mm)
        );
        if r.task == "assembly" {
            let _ = writeln!(
                cf,
                "{src},{},{},{},{sc},{:.6},{:.6},{}",
                r.task,
                r.variant,
                r.seed,
                r.success,
                r.max_contact_force,
                opt(r.assembly_steps)
            );
        }
    }
    for (name, text) in [("force_errors.csv", &fe), ("contact_force.csv", &cf)] {
        let path = out.join(name);
        write(&path, text)?;
        report.files.push(path);
    }

    // Insertion depth over time from any trajectory that records insertion.
    let mut depth = String::from("source,step,time,depth,fenv_norm\n");
    for f in files.iter().filter(|f| {
        f.extension().is_some_and(|e| e == "csv")
            && f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trajectory"))
    }) {
        let text = std::fs::read_to_string(f).map_err(|e| LacError::io(format!("reading {}", f.display()), e))?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').map(|x| x.parse().ok()).collect::<Option<Vec<f64>>>())
            .filter(|r| r.len() == 15)
            .collect();
        if !rows.iter().any(|r| r[14] != 0.0) {
            continue;
        }
        let src = f.strip_prefix(dir).unwrap_or(f).display();
        for r in rows {
            let fenv = (r[11] * r[11] + r[12] * r[12] + r[13] * r[13]).sqrt();
            let _ = writeln!(depth, "{src},{},{:.6},{:.6},{fenv:.6}", r[0], r[1], r[14]);
        }
    }
    let path = out.join("insertion_depth.csv");
    write(&path, &depth)?;
    report.files.push(path);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_missing_metrics() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(export_plots(dir.path()), Err(LacError::MissingMetrics(_))));
        assert!(matches!(
            export_plots(&dir.path().join("absent")),
            Err(LacError::MissingMetrics(_))
        ));
    }

    #[test]
    fn mean_std_is_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
