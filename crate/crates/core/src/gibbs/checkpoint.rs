//! Versioned chain checkpoints.
//!
//! Every random draw is addressed by `(seed, iteration, step, entity)`, so
//! the seed and the number of completed sweeps are a complete RNG cursor.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ChainProgress;
use crate::error::{MindsError, Result};
use crate::model::ModelConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub completed_iterations: usize,
    pub config: ModelConfig,
    pub progress: ChainProgress,
}

impl Checkpoint {
    /// Write atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer(&mut f, self)?;
            f.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(MindsError::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.seed != ckpt.config.seed || ckpt.completed_iterations != ckpt.progress.trace.len() {
            return Err(MindsError::Config(
                "checkpoint cursor is inconsistent with its contents".into(),
            ));
        }
        Ok(ckpt)
    }
}
