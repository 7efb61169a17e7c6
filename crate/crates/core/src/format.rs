//! Shared on-disk layout: a JSON manifest next to flat little-endian
//! `binary32` arrays, each guarded by a CRC32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One flat array file referenced from a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    /// Path relative to the manifest directory.
    pub path: String,
    /// Number of `f32` elements.
    pub len: usize,
    pub crc32: u32,
}

pub fn encode_f32(data: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_f32_array(root: &Path, rel: &str, data: &[f32]) -> Result<ArrayEntry> {
    let bytes = encode_f32(data);
    let crc32 = crc32fast::hash(&bytes);
    write_atomic(&root.join(rel), &bytes)?;
    Ok(ArrayEntry {
        path: rel.to_string(),
        len: data.len(),
        crc32,
    })
}

pub fn read_f32_array(root: &Path, entry: &ArrayEntry) -> Result<Vec<f32>> {
    let path = root.join(&entry.path);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = entry.len as u64 * 4;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path,
            found,
            expected,
        });
    }
    if found > expected {
        return Err(Error::Malformed {
            path,
            reason: format!("{found} bytes, expected {expected}"),
        });
    }
    let computed = crc32fast::hash(&bytes);
    if computed != entry.crc32 {
        return Err(Error::Checksum {
            path,
            stored: entry.crc32,
            computed,
        });
    }
    Ok(decode_f32(&bytes))
}

pub fn write_manifest<M: Serialize>(path: &Path, manifest: &M) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(manifest)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

/// Reads a manifest, checking `schema_version` before decoding the rest.
pub fn read_manifest<M: DeserializeOwned>(path: &Path) -> Result<M> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            reason: "missing schema_version".into(),
        })?;
    if found != SCHEMA_VERSION as u64 {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: found as u32,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
