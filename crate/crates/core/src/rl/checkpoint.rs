//! Text manifest plus a little-endian f32 blob holding every tensor in
//! manifest order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::sac::SacAgent;
use super::tensor::Real;
use crate::error::{LacError, Result};

pub const FORMAT: &str = "lac-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub config_hash: String,
    pub step: u64,
    pub blob: String,
    pub blob_sha256: String,
    pub tensors: Vec<(String, Vec<usize>)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format={FORMAT}");
        let _ = writeln!(s, "config_hash={}", self.config_hash);
        let _ = writeln!(s, "step={}", self.step);
        let _ = writeln!(s, "blob={}", self.blob);
        let _ = writeln!(s, "blob_sha256={}", self.blob_sha256);
        for (name, shape) in &self.tensors {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "tensor={name} {}", dims.join(","));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| LacError::ChecksumMismatch(m);
        let mut m = Manifest {
            config_hash: String::new(),
            step: 0,
            blob: String::new(),
            blob_sha256: String::new(),
            tensors: Vec::new(),
        };
        let mut format_ok = false;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed manifest line {line:?}")))?;
            match k {
                "format" => format_ok = v == FORMAT,
                "config_hash" => m.config_hash = v.to_string(),
                "step" => m.step = v.parse().map_err(|_| bad(format!("bad step {v:?}")))?,
                "blob" => m.blob = v.to_string(),
                "blob_sha256" => m.blob_sha256 = v.to_string(),
                "tensor" => {
                    let (name, dims) = v.split_once(' ').ok_or_else(|| bad(format!("bad tensor line {v:?}")))?;
                    let shape = dims
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("bad shape {dims:?}")))?;
                    m.tensors.push((name.to_string(), shape));
                }
                _ => return Err(bad(format!("unknown manifest key {k:?}"))),
            }
        }
        if !format_ok {
            return Err(bad("unsupported checkpoint format".into()));
        }
        Ok(m)
    }
}

fn blob_path(manifest: &Path, blob: &str) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new(".")).join(blob)
}

/// Writes `path` (manifest) and a sibling `.bin` blob.
pub fn save<T: Real>(agent: &SacAgent<T>, path: &Path, config_hash: &str, step: u64) -> Result<()> {
    let params = agent.all_params();
    let mut bytes = Vec::with_capacity(params.iter().map(|p| p.len() * 4).sum());
    for p in &params {
        for v in &p.value {
            bytes.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        }
    }
    let blob = format!(
        "{}.bin",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    );
    let manifest = Manifest {
        config_hash: config_hash.to_string(),
        step,
        blob_sha256: hex(&Sha256::digest(&bytes)),
        blob: blob.clone(),
        tensors: params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect(),
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| LacError::io(format!("creating {}", dir.display()), e))?;
        }
    }
    let bp = blob_path(path, &blob);
    fs::write(&bp, &bytes).map_err(|e| LacError::io(format!("writing {}", bp.display()), e))?;
    fs::write(path, manifest.render()).map_err(|e| LacError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| LacError::io(format!("reading {}", path.display()), e))?;
    Manifest::parse(&text)
}

/// Loads tensors into `agent`, rejecting a different config hash or layout.
/// Returns the stored step count.
pub fn load<T: Real>(agent: &mut SacAgent<T>, path: &Path, config_hash: &str) -> Result<u64> {
    let m = read_manifest(path)?;
    if m.config_hash != config_hash {
        return Err(LacError::ChecksumMismatch(format!(
            "checkpoint config hash {} does not match {}",
            m.config_hash, config_hash
        )));
    }
    let mut params = agent.all_params_mut();
    if params.len() != m.tensors.len() {
        return Err(LacError::ChecksumMismatch(format!(
            "checkpoint holds {} tensors, model has {}",
            m.tensors.len(),
            params.len()
        )));
    }
    for (p, (name, shape)) in params.iter().zip(&m.tensors) {
        if &p.name != name || &p.shape != shape {
            return Err(LacError::ChecksumMismatch(format!(
                "tensor {name} {shape:?} does not match model tensor {} {:?}",
                p.name, p.shape
            )));
        }
    }
    let bp = blob_path(path, &m.blob);
    let bytes = fs::read(&bp).map_err(|e| LacError::io(format!("reading {}", bp.display()), e))?;
    if hex(&Sha256::digest(&bytes)) != m.blob_sha256 {
        return Err(LacError::ChecksumMismatch("tensor blob checksum differs".into()));
    }
    let total: usize = params.iter().map(|p| p.len()).sum();
    if bytes.len() != total * 4 {
        return Err(LacError::ChecksumMismatch(format!(
            "blob holds {} bytes, expected {}",
            bytes.len(),
            total * 4
        )));
    }
    let mut chunks = bytes.chunks_exact(4);
    for p in params.iter_mut() {
        for v in p.value.iter_mut() {
            let c = chunks.next().expect("length checked");
            *v = T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        }
    }
    Ok(m.step)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
