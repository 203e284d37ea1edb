//! JSON Lines helpers and file hashing.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::BenchmarkInstance;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs { path: path.display().to_string(), source }
}

/// Serializes rows as JSON Lines, one object per line, trailing newline.
pub fn to_jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    let file = fs::File::create(path).map_err(fs_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&to_jsonl(rows)?).map_err(fs_err(path))?;
    w.flush().map_err(fs_err(path))
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = fs::read_to_string(path).map_err(fs_err(path))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(fs_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    fs::write(path, text).map_err(fs_err(path))
}

/// Benchmark instances in JSON Lines form; invariants are checked per row.
pub fn load_instances(path: &Path) -> Result<Vec<BenchmarkInstance>, IoError> {
    read_jsonl(path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&fs::read(path).map_err(fs_err(path))?))
}
