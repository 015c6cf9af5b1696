//! `manifest.json`: what ran, on which inputs, and what it wrote.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Serialize)]
pub struct InputRecord {
    pub source: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub arguments: Vec<String>,
    pub system: Option<InputRecord>,
    pub seed: u64,
    pub formulation: String,
    pub outputs: Vec<OutputRecord>,
    pub exit_code: i32,
}

/// Collects artifacts under one output directory.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<OutputRecord>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: vec![],
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path.display().to_string(), e))?;
        self.written.retain(|o| o.file != name);
        self.written.push(OutputRecord {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.outputs = std::mem::take(&mut self.written);
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path.display().to_string(), e))
    }
}
