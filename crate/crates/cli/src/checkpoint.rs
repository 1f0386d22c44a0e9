//! Versioned JSON checkpoints for dual potentials and Monge maps.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stochot::dual::{DualPotential, Regularization};
use stochot::map_learn::MongeMap;

use crate::config::CostKind;
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub regularization: Regularization,
    pub cost: CostKind,
    pub source_dim: usize,
    pub target_dim: usize,
    pub seed: u64,
    /// Resolved configuration of the run that produced the checkpoint.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    DualPotentials { u: DualPotential, v: DualPotential },
    MongeMap { map: MongeMap, reverse: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub metadata: CheckpointMeta,
    pub payload: Payload,
}

impl Checkpoint {
    pub fn new(metadata: CheckpointMeta, payload: Payload) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            metadata,
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::DualPotentials { .. } => "dual_potentials",
            Payload::MongeMap { .. } => "monge_map",
        }
    }
}

/// Write through a temporary file and rename, so a crash never leaves a
/// truncated checkpoint behind.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> CliResult<()> {
    let text = serde_json::to_string_pretty(ckpt).map_err(|e| CliError::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let tmp = path.with_extension("json.partial");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: String| CliError::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(format!("malformed document: {e}")))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => {}
        Some(v) => return Err(bad(format!("unsupported version {v}, expected {CHECKPOINT_VERSION}"))),
        None => return Err(bad("missing version field".into())),
    }
    let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| bad(format!("invalid contents: {e}")))?;
    if let Payload::MongeMap { map, .. } = &ckpt.payload {
        MongeMap::new(map.mlp.clone(), map.normalization.clone()).map_err(|e| bad(e.to_string()))?;
    }
    Ok(ckpt)
}
