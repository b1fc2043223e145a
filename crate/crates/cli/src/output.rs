//! Output directories and file helpers.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Creates `dir`, refusing to reuse a non-empty directory so earlier runs are never modified.
pub fn create_out_dir(dir: &Path) -> CliResult<PathBuf> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(CliError::io(dir))?;
        if entries.next().is_some() {
            return Err(CliError::Usage(format!(
                "output directory {} already exists and is not empty; pass a new --out",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    Ok(dir.to_path_buf())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Formats an optional number for CSV; missing values become empty cells.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_non_empty_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        create_out_dir(&dir).unwrap();
        // An empty directory may be reused.
        create_out_dir(&dir).unwrap();
        write_text(&dir.join("x"), "1").unwrap();
        assert!(matches!(create_out_dir(&dir), Err(CliError::Usage(_))));
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
