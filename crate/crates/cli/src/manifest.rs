use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use velosurf::io_util::{sha256_hex, write_atomic};

use crate::failure::Failure;

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: resolved parameters and the hashes
/// of what went in and came out.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub model_format: String,
    pub dataset_format: String,
    pub parameters: BTreeMap<String, Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// The only field expected to differ between identical runs.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            model_format: format!(
                "{} {}",
                velosurf::model_io::MAGIC,
                velosurf::model_io::FORMAT_VERSION
            ),
            dataset_format: format!(
                "{} {}",
                velosurf::dataset_io::DATASET_MAGIC,
                velosurf::dataset_io::DATASET_VERSION
            ),
            parameters: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("parameters serialize");
        self.parameters.insert(key.into(), v);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes =
            std::fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn inputs<'a>(
        &mut self,
        paths: impl IntoIterator<Item = &'a PathBuf>,
    ) -> Result<(), Failure> {
        paths.into_iter().try_for_each(|p| self.input(p))
    }

    /// Write `bytes` atomically and record them as an output.
    pub fn emit(&mut self, path: &Path, bytes: &[u8]) -> Result<(), Failure> {
        write_atomic(path, bytes)?;
        self.outputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Write the manifest to `path`.
    pub fn finish(&self, path: &Path) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

/// `out.csv` → `out.csv.manifest.json`, beside the primary output.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
