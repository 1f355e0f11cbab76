use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Record of one command invocation. Written before any output and
/// rewritten with the finish time once all outputs exist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// hex sha256 of the canonical JSON of `config`
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub variant: Option<String>,
    pub checkpoints: Vec<String>,
    pub outputs: Vec<String>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn config_hash(config: &Value) -> String {
    // serde_json maps are sorted, so this string is canonical
    let text = serde_json::to_string(config).expect("json values serialize");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: u64, variant: Option<String>) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(&config),
            config,
            seed,
            variant,
            checkpoints: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: None,
        }
    }

    pub fn path(out: &Path) -> PathBuf {
        out.join("manifest.json")
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = Self::path(out);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(&mut self, out: &Path) -> Result<()> {
        self.finished_at = Some(now());
        self.write(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"a":1,"b":[2,3]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b":[2,3],"a":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
