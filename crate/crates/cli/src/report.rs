//! Experiment reports: named metrics, written files and the resolved config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub command: String,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
    pub config: serde_json::Value,
}

impl ExperimentReport {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            ..Default::default()
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Write `report.json` into `dir` and record it.
    pub fn save(&mut self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("report.json");
        self.files.push(path.clone());
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::error::CliError::config(format!("{}: {e}", path.display())))
    }
}
