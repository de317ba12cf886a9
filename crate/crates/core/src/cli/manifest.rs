//! Run manifests and hashed output bookkeeping.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run: `--config manifest.json` reuses the
/// snapshot, which already carries the seed and every input document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub config: Value,
    /// Hash of the serialized snapshot.
    pub inputs_sha256: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub threads: usize,
    pub outputs: Vec<OutputEntry>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) struct OutputDir {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file already written under the directory.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = std::fs::read(self.path(name))?;
        self.entries.push(OutputEntry {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.path(name), bytes).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(name, (text + "\n").as_bytes())
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn outputs_are_hashed_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::new(dir.path());
        out.write("b.txt", b"abc").unwrap();
        out.write("a.txt", b"").unwrap();
        let names: Vec<_> = out.entries().iter().map(|e| e.path.as_str()).collect();
        assert_eq!(names, ["b.txt", "a.txt"]);
        assert_eq!(
            out.entries()[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
