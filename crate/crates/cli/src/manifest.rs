use anyhow::Result;
use serde::Serialize;
use std::path::Path;

/// Every run writes one of these next to its outputs so the result is
/// reproducible from the manifest alone (same command + config + seed gives
/// byte-identical outputs). No timestamps by design.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub resolved_config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, resolved_config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            resolved_config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: impl AsRef<Path>) -> Self {
        self.inputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, path: impl AsRef<Path>) -> Self {
        self.outputs.push(path.as_ref().display().to_string());
        self
    }

    /// Write as `<dir>/run_manifest.json` (directory outputs) or
    /// `<file>.manifest.json` (file outputs).
    pub fn write_next_to(&self, target: &Path) -> Result<()> {
        let path = if target.is_dir() {
            target.join("run_manifest.json")
        } else {
            let mut name = target.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            target.with_file_name(name)
        };
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
