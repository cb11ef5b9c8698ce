//! Output files: provenance metadata, hashing and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUTPUT_DIR_ENV: &str = "RPEL_OUTPUT_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical JSON encoding (object keys sorted).
pub fn config_hash<T: Serialize>(value: &T) -> Result<String, CliError> {
    let canonical = serde_json::to_value(value)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
}

/// Provenance embedded in every output file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(config_hash: String, seed: Option<u64>) -> Self {
        Self {
            tool: "rpel",
            version: VERSION,
            config_hash,
            seed,
        }
    }

    /// Comment line heading CSV output.
    pub fn csv_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# {} version={} config_hash={} seed={}\n",
            self.tool, self.version, self.config_hash, seed
        )
    }
}

/// Renders rows as CSV (header row, comma, LF) under the metadata line.
pub fn csv_string<R: Serialize>(meta: &Meta, rows: &[R]) -> Result<String, CliError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(meta.csv_line().into_bytes());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Explicit directory, else `$RPEL_OUTPUT_DIR`, else `rpel-out`.
pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rpel-out"))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
