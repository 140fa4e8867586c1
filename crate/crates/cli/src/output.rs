//! Artifact bookkeeping: metadata, hashing and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    /// Hash covers the resolved settings and the bytes of every input file.
    pub fn new<S: Serialize>(seed: u64, settings: &S, inputs: &[(&str, &[u8])]) -> Meta {
        let inputs: Vec<(&str, String)> = inputs.iter().map(|(name, b)| (*name, hex_digest(b))).collect();
        let canonical = serde_json::to_vec(&(settings, inputs)).expect("settings serialize");
        Meta {
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_hash: hex_digest(&canonical),
        }
    }
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn json<T: Serialize>(&mut self, name: impl Into<PathBuf>, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
    }

    pub fn text(&mut self, name: impl Into<PathBuf>, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    pub fn names(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes each file to a temporary sibling and renames it into place.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            let parent = path.parent().unwrap_or(dir);
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
            let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(CliError::io(parent))?;
            tmp.write_all(bytes).map_err(CliError::io(&path))?;
            tmp.persist(&path).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e.error,
            })?;
        }
        Ok(())
    }
}
