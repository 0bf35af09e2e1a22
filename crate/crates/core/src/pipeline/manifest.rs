use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Seeds;
use crate::error::{Error, Result};
use crate::synthetic::{sha256_file, FileChecksum};

pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Record written next to every stage's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    /// Hash of the stage's configuration and input checksums; an unchanged
    /// fingerprint with intact outputs makes a rerun a no-op.
    pub fingerprint: String,
    pub seeds: Seeds,
    pub config: serde_json::Value,
    pub inputs: Vec<FileChecksum>,
    /// Paths relative to the stage directory.
    pub outputs: Vec<FileChecksum>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

pub fn fingerprint(stage: &str, config: &serde_json::Value, inputs: &[FileChecksum]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config)?);
    for f in inputs {
        h.update([0]);
        h.update(f.path.as_bytes());
        h.update([0]);
        h.update(f.sha256.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Checksum entry for `path`, recorded under `label`.
pub fn checksum(path: &Path, label: impl Into<String>) -> Result<FileChecksum> {
    Ok(FileChecksum {
        path: label.into(),
        sha256: sha256_file(path)?,
    })
}

/// Every regular file below `dir` except the run manifest, sorted, with
/// paths relative to `dir`.
pub fn collect_outputs(dir: &Path) -> Result<Vec<FileChecksum>> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, base, out)?;
            } else if path != base.join(RUN_MANIFEST) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir, dir, &mut paths)?;
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
            checksum(p, rel)
        })
        .collect()
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    /// Whether `dir` already holds a completed run with this fingerprint and
    /// untouched outputs.
    pub fn is_current(dir: &Path, fingerprint: &str) -> bool {
        let Ok(m) = Self::load(dir) else {
            return false;
        };
        m.fingerprint == fingerprint
            && m.outputs
                .iter()
                .all(|f| sha256_file(&dir.join(&f.path)).is_ok_and(|h| h == f.sha256))
    }
}

/// Loads the manifest of an upstream stage or reports which subcommand
/// must run first.
pub fn require_stage(dir: &Path, required: &'static str) -> Result<FileChecksum> {
    let path = dir.join(RUN_MANIFEST);
    if !path.is_file() {
        return Err(Error::MissingArtifact { path, required });
    }
    checksum(&path, format!("{required}/{RUN_MANIFEST}"))
}
