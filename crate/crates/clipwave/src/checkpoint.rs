//! JSON checkpoints of an in-progress run.
//!
//! A checkpoint holds the full regressor state and the run accumulators. The
//! training sample is regenerated from the seed on resume, so a resumed run
//! reproduces an uninterrupted one bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::RunState;

const FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Checkpoint {
    pub config_digest: String,
    pub seed: u64,
    pub state: RunState,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: u32,
    body: T,
}

pub(crate) fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(&Envelope {
        format: FORMAT,
        body: checkpoint,
    })?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn load(path: &Path, digest: &str, seed: u64) -> Result<RunState> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let envelope: Envelope<Checkpoint> = serde_json::from_str(&text)?;
    if envelope.format != FORMAT {
        return Err(HarnessError::Checkpoint(format!("unknown format {}", envelope.format)));
    }
    let c = envelope.body;
    if c.config_digest != digest {
        return Err(HarnessError::Checkpoint("config digest differs".into()));
    }
    if c.seed != seed {
        return Err(HarnessError::Checkpoint(format!("seed {} differs from {seed}", c.seed)));
    }
    Ok(c.state)
}
