//! Output files: atomic writes and a digest manifest per run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::Result;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<OutputDigest>,
}

/// Collects the files of one run under `dir` and records their digests.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn new(dir: impl Into<PathBuf>, command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            dir: dir.into(),
            manifest: RunManifest {
                command: command.into(),
                config,
                seed,
                version: env!("CARGO_PKG_VERSION").into(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.push(OutputDigest { file: name.into(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the manifest last, so it covers every output.
    pub fn finish(self) -> Result<RunManifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(self.manifest)
    }
}

/// Recomputes the digests of a manifest's outputs; returns the files that differ.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for out in &manifest.outputs {
        let bytes = fs::read(dir.join(&out.file))?;
        if sha256_hex(&bytes) != out.sha256 {
            bad.push(out.file.clone());
        }
    }
    Ok(bad)
}
