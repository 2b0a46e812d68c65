use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    /// Gibbs sweeps run by the command, when it ran any.
    pub iterations: Option<usize>,
    pub seconds_per_iteration: Option<f64>,
}

/// Run record written beside every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    /// Effective configuration after flag and environment overrides.
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub timings: Timings,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Builder that collects inputs and outputs while a command runs.
pub struct RunRecord {
    command: &'static str,
    started: Instant,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
    iterations: Option<usize>,
}

impl RunRecord {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            iterations: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn iterations(&mut self, n: usize) {
        self.iterations = Some(self.iterations.unwrap_or(0) + n);
    }

    pub fn finish<C: Serialize>(self, out_dir: &Path, config: &C, seed: u64) -> Result<()> {
        let total = self.started.elapsed().as_secs_f64();
        let config = serde_json::to_value(config)?;
        let manifest = Manifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            seed,
            threads: rayon::current_num_threads(),
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            timings: Timings {
                total_seconds: total,
                iterations: self.iterations,
                seconds_per_iteration: self.iterations.filter(|&n| n > 0).map(|n| total / n as f64),
            },
        };
        let _ = fs::remove_file(out_dir.join(ERROR_FILE));
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
