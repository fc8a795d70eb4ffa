use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one CLI run, written as `run_manifest.json` in the output
/// directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub parameters: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub diagnostics: Value,
    pub duration_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Collects inputs and outputs while a command runs.
pub struct Recorder {
    command: String,
    seed: u64,
    workers: usize,
    started: Instant,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str, seed: u64, workers: usize) -> Self {
        Self {
            command: command.to_owned(),
            seed,
            workers,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.to_owned(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    pub fn finish(self, out: &Path, parameters: Value, diagnostics: Value) -> Result<(), Failure> {
        let path = out.join(RUN_MANIFEST);
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            workers: self.workers,
            parameters,
            inputs: self.inputs,
            outputs: self.outputs,
            diagnostics,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }
}
