//! Per-run manifest with output checksums.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub parameters: std::collections::BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub passed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &Config) -> String {
    sha256_hex(cfg.canonical().as_bytes())
}

fn checksum(dir: &Path, rel: &str) -> CliResult<OutputFile> {
    let bytes = std::fs::read(dir.join(rel))?;
    Ok(OutputFile { path: rel.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// All regular files below `dir` other than the manifest, as sorted relative paths.
fn inventory(dir: &Path) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    let mut stack: Vec<PathBuf> = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("walk stays below dir").to_string_lossy().replace('\\', "/");
                if rel != MANIFEST_NAME {
                    out.push(rel);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

impl RunManifest {
    /// Checksum every file in `dir`, write the manifest and re-verify it.
    pub fn finalise(dir: &Path, cfg: &Config, command: &str, passed: bool) -> CliResult<Self> {
        let outputs = inventory(dir)?.iter().map(|rel| checksum(dir, rel)).collect::<CliResult<Vec<_>>>()?;
        let m = Self {
            config_hash: config_hash(cfg),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.seed()?,
            parameters: cfg.entries().clone(),
            outputs,
            passed,
        };
        std::fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&m)? + "\n")?;
        Self::audit(dir)?;
        Ok(m)
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        Ok(serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME))?)?)
    }

    /// Recompute every checksum and compare with the stored manifest.
    pub fn audit(dir: &Path) -> CliResult<Self> {
        let m = Self::read(dir)?;
        for f in &m.outputs {
            let now = checksum(dir, &f.path)?;
            if now.sha256 != f.sha256 {
                return Err(CliError::Manifest(format!("checksum mismatch for {}", f.path)));
            }
        }
        let listed: Vec<&str> = m.outputs.iter().map(|f| f.path.as_str()).collect();
        for rel in inventory(dir)? {
            if !listed.contains(&rel.as_str()) {
                return Err(CliError::Manifest(format!("{rel} is not listed in the manifest")));
            }
        }
        Ok(m)
    }
}
