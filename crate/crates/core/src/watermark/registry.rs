//! File-per-record registry keyed by the SHA-256 of the content id.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::record::WatermarkRecord;
use crate::{Error, Result};

pub const RECORD_EXTENSION: &str = "rzw";

/// `<dir>/<sha256(content_id)>.rzw`
pub fn record_path(dir: impl AsRef<Path>, content_id: &str) -> PathBuf {
    let digest = Sha256::digest(content_id.as_bytes());
    dir.as_ref().join(format!("{}.{RECORD_EXTENSION}", hex::encode(digest)))
}

/// Writes `record`. Without `force`, an existing record for the same content
/// id is an error and the file is created exclusively, so of two concurrent
/// writers exactly one succeeds.
pub fn registry_put(dir: impl AsRef<Path>, record: &WatermarkRecord, force: bool) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = record_path(dir, &record.content_id);
    let json = record.to_json();
    if force {
        // Write-then-rename so readers never see a half-written record.
        let tmp = path.with_extension(format!("{RECORD_EXTENSION}.tmp{}", std::process::id()));
        fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        return Ok(path);
    }
    let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == ErrorKind::AlreadyExists => {
            return Err(Error::DuplicateRecord(record.content_id.clone()));
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    file.write_all(json.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn registry_get(dir: impl AsRef<Path>, content_id: &str) -> Result<WatermarkRecord> {
    let path = record_path(dir, content_id);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::MissingRecord(content_id.to_string())),
        Err(e) if e.kind() == ErrorKind::InvalidData => {
            return Err(Error::CorruptPayload(format!("{} is not UTF-8", path.display())))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let record = WatermarkRecord::from_json(&text)?;
    if record.content_id != content_id {
        return Err(Error::CorruptPayload(format!(
            "record at {} belongs to {:?}",
            path.display(),
            record.content_id
        )));
    }
    Ok(record)
}

/// Every record in `dir`, sorted by content id. Temporary files left by an
/// interrupted forced write are skipped.
pub fn registry_list(dir: impl AsRef<Path>) -> Result<Vec<WatermarkRecord>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(RECORD_EXTENSION) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        records.push(WatermarkRecord::from_json(&text)?);
    }
    records.sort_by(|a, b| a.content_id.cmp(&b.content_id));
    Ok(records)
}

