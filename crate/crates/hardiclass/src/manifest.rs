//! Per-run provenance record written next to each primary output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::io::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<Artifact>,
    pub wall_seconds: f64,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `<primary>.manifest.json`, with any `.json` suffix of `primary` dropped.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let stem = if primary.extension().is_some_and(|e| e == "json") { primary.with_extension("") } else { primary.to_path_buf() };
    let mut s = stem.into_os_string();
    s.push(".manifest.json");
    s.into()
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parameters,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.outputs.push(Artifact { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn write(&self, primary: &Path) -> CliResult<PathBuf> {
        let path = manifest_path(primary);
        write_json(&path, self)?;
        Ok(path)
    }
}
