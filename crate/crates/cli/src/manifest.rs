use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Run record written next to the outputs of every config-driven command.
/// Paths are relative to the output directory, and there is no wall-clock
/// data, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub counts: BTreeMap<String, usize>,
    pub outputs: Vec<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Self {
            schema_version: traitbench::SCHEMA_VERSION,
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seeds: BTreeMap::new(),
            counts: BTreeMap::new(),
            outputs: Vec::new(),
            status: "running".into(),
            failed_stage: None,
            error: None,
        }
    }

    pub fn file_name(&self) -> String {
        format!("manifest_{}.json", self.command)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(self.file_name()), text + "\n")
    }
}
