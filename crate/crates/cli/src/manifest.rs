//! Run directories, manifests and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const VERSION: &str = concat!("csl-turb ", env!("CARGO_PKG_VERSION"));

/// One machine-checked condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: String,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        passed: bool,
        value: f64,
        limit: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            passed,
            value,
            limit: limit.into(),
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check::new(name, value <= limit, value, format!("<= {limit:e}"))
    }

    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Check::new(
            name,
            (value - target).abs() <= tol,
            value,
            format!("{target:e} +/- {tol:e}"),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub timestamp: u64,
    pub version: String,
    pub master_seed: u64,
    pub config: BTreeMap<String, String>,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    pub all_passed: bool,
    /// Reported numbers that are not pass/fail conditions.
    pub diagnostics: BTreeMap<String, f64>,
}

/// First 16 hex digits of SHA-256 over the command, the resolved config and
/// the command flags. The seed is part of the config.
pub fn run_id(command: &str, config: &BTreeMap<String, String>, flags: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    for (k, v) in config {
        h.update(format!("{k}={v}\n").as_bytes());
    }
    for f in flags {
        h.update(format!("flag {f}\n").as_bytes());
    }
    h.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `contents` to a temporary file in the target directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Writes every data file, then the manifest last.
pub fn write_run(
    dir: &Path,
    files: &[(String, String)],
    manifest: &RunManifest,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in files {
        write_atomic(&dir.join(name), contents.as_bytes())?;
    }
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    write_atomic(&path, json.as_bytes())?;
    Ok(path)
}
