//! Output artifacts: CSV helpers and the provenance stamp (config hash and
//! seed) attached to everything a run writes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quotes a CSV field when it contains a delimiter, quote, or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Provenance stamp written next to every CSV artifact and inside every JSON one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
    pub artifact: String,
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes an artifact plus its `<name>.meta.json` sidecar.
pub fn write_artifact(path: &Path, contents: &str, config_hash: &str, seed: u64) -> Result<()> {
    write_file(path, contents)?;
    let meta = ArtifactMeta {
        config_hash: config_hash.to_string(),
        seed,
        artifact: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
    };
    write_file(&meta_path(path), &(serde_json::to_string_pretty(&meta)? + "\n"))
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

/// The sidecar of `path`, if present and readable.
pub fn read_meta(path: &Path) -> Option<ArtifactMeta> {
    let text = std::fs::read_to_string(meta_path(path)).ok()?;
    serde_json::from_str(&text).ok()
}
