//! Run manifests: what was run, on which inputs, producing which files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, enough to rerun the command.
    pub argv: Vec<String>,
    /// Resolved configuration, defaults filled in.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_clock_secs: f64,
    pub version: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Files under `root`, relative and sorted, skipping `skip`.
pub fn list_files(root: &Path, skip: &[&str]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))? {
            let path = entry.map_err(|e| CliError::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                if !skip.iter().any(|s| rel == Path::new(s)) {
                    out.push(rel);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Hash of a file, or of a directory as the digest of its sorted
/// `(relative path, file hash)` lines.
pub fn sha256_path(path: &Path) -> Result<String, CliError> {
    if path.is_file() {
        return sha256_file(path);
    }
    let mut h = Sha256::new();
    for rel in list_files(path, &[RUN_MANIFEST])? {
        h.update(rel.to_string_lossy().as_bytes());
        h.update(b"\0");
        h.update(sha256_file(&path.join(&rel))?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex(&h.finalize()))
}

pub fn hash_inputs(paths: &[&Path]) -> Result<Vec<FileHash>, CliError> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.display().to_string(),
                sha256: sha256_path(p)?,
            })
        })
        .collect()
}

/// Every file under `dir` except the manifest itself.
pub fn hash_outputs(dir: &Path) -> Result<Vec<FileHash>, CliError> {
    list_files(dir, &[RUN_MANIFEST])?
        .into_iter()
        .map(|rel| {
            Ok(FileHash {
                sha256: sha256_file(&dir.join(&rel))?,
                path: rel.to_string_lossy().into_owned(),
            })
        })
        .collect()
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(self).map_err(egoexo::Error::from)?;
        text.push(b'\n');
        egoexo::format::write_atomic(&dir.join(RUN_MANIFEST), &text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(RUN_MANIFEST);
        let text = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_slice(&text).map_err(egoexo::Error::from)?)
    }

    /// Recomputes input and output hashes; fails on any difference.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        if hash_outputs(dir)? != self.outputs {
            return Err(CliError::Data(format!(
                "outputs under {} do not match the run manifest",
                dir.display()
            )));
        }
        for input in &self.inputs {
            if sha256_path(Path::new(&input.path))? != input.sha256 {
                return Err(CliError::Data(format!(
                    "input {} changed since the run",
                    input.path
                )));
            }
        }
        Ok(())
    }
}
