//! CSV files with `#` metadata lines, and the guard against mixing outputs
//! of different configurations in one directory.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::{HarnessError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every output file records about its origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub kind: String,
}

impl Metadata {
    pub fn header(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# tbh {VERSION}\n# config_hash {}\n# seed {seed}\n# kind {}\n",
            self.config_hash, self.kind
        )
    }
}

/// The `config_hash` recorded in an existing output, if any.
pub fn recorded_hash(path: &Path) -> Result<Option<String>> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Some(meta) = line.strip_prefix('#') else { break };
        if let Some(hash) = meta.trim().strip_prefix("config_hash ") {
            return Ok(Some(hash.trim().to_string()));
        }
    }
    Ok(None)
}

/// Fails if `path` exists and was written for another configuration. Files
/// without a recorded hash are treated as foreign too.
pub fn check_overwrite(path: &Path, hash: &str) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    match recorded_hash(path)? {
        Some(h) if h == hash => Ok(()),
        found => Err(HarnessError::HashMismatch {
            path: path.to_path_buf(),
            expected: hash.to_string(),
            found: found.unwrap_or_else(|| "none".into()),
        }),
    }
}

/// Writes `header + body` to `dir/name`, honouring [`check_overwrite`].
pub fn write_csv(dir: &Path, name: &str, meta: &Metadata, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    check_overwrite(&path, &meta.config_hash)?;
    let mut text = meta.header();
    text.push_str(body);
    fs::write(&path, text)?;
    Ok(path)
}

/// Shortest round-trip formatting, so equal numbers give equal bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}
