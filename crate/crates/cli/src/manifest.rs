//! Per-stage `manifest.json`: tool version, seeds, resolved configuration and
//! SHA-256 digests of every input and output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, Seeds};
use crate::error::{bad_artifact, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn version() -> &'static str {
    env!("SENTRISK_VERSION")
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seeds: Seeds,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    /// Digest over the sorted input digests.
    pub input_digest: String,
    pub outputs: BTreeMap<String, String>,
    pub details: BTreeMap<String, serde_json::Value>,
}

/// Collects file digests while a stage runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    seeds: Seeds,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    details: BTreeMap<String, serde_json::Value>,
}

impl ManifestBuilder {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            seeds: cfg.seeds,
            config: serde_json::to_value(cfg).expect("config serializes"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("detail serializes"));
        self
    }

    fn digests(paths: &[PathBuf]) -> CliResult<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
            .collect()
    }

    pub fn finish(&self) -> CliResult<Manifest> {
        let inputs = Self::digests(&self.inputs)?;
        let mut h = Sha256::new();
        for d in inputs.values() {
            h.update(d.as_bytes());
        }
        Ok(Manifest {
            command: self.command.clone(),
            version: version().to_string(),
            seeds: self.seeds,
            config: self.config.clone(),
            input_digest: hex::encode(h.finalize()),
            inputs,
            outputs: Self::digests(&self.outputs)?,
            details: self.details.clone(),
        })
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<Manifest> {
        let m = self.finish()?;
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(m)
    }
}

pub fn read(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| bad_artifact(&path, e))
}
