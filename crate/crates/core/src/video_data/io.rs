use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BlobTrack, Dataset, DatasetSpec, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::format::{self, ArrayEntry, SCHEMA_VERSION};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub kind: String,
    pub seed: u64,
    pub spec: DatasetSpec,
    pub videos: Vec<VideoEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub video_id: String,
    pub split: Split,
    pub action_label: usize,
    pub ego_param: f64,
    pub background: f64,
    /// `[T, C, H, W]`.
    pub shape: [usize; 4],
    pub dtype: String,
    pub tensor: ArrayEntry,
    pub blob_tracks: Vec<BlobTrack>,
}

const KIND: &str = "video_dataset";

/// Writes `manifest.json` and `tensors/<video_id>.f32` under `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let mut videos = Vec::with_capacity(dataset.videos.len());
    for v in &dataset.videos {
        let s = v.frames.shape();
        let tensor = format::write_f32_array(
            dir,
            &format!("tensors/{}.f32", v.video_id),
            v.frames.as_slice(),
        )?;
        videos.push(VideoEntry {
            video_id: v.video_id.clone(),
            split: v.split,
            action_label: v.action_label,
            ego_param: v.ego_param,
            background: v.background,
            shape: [s[0], s[1], s[2], s[3]],
            dtype: "f32".into(),
            tensor,
            blob_tracks: v.blob_tracks.clone(),
        });
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        kind: KIND.into(),
        seed: dataset.seed,
        spec: dataset.spec.clone(),
        videos,
    };
    format::write_manifest(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = format::read_manifest(&path)?;
    if manifest.kind != KIND {
        return Err(Error::Malformed {
            path,
            reason: format!("kind {:?} is not {KIND}", manifest.kind),
        });
    }
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for e in manifest.videos {
        if e.dtype != "f32" {
            return Err(Error::Malformed {
                path: path.clone(),
                reason: format!("unsupported dtype {}", e.dtype),
            });
        }
        let data = format::read_f32_array(dir, &e.tensor)?;
        let frames = Tensor::from_vec(&e.shape, data)?;
        videos.push(VideoRecord {
            video_id: e.video_id,
            frames,
            action_label: e.action_label,
            ego_param: e.ego_param,
            background: e.background,
            blob_tracks: e.blob_tracks,
            split: e.split,
        });
    }
    Ok(Dataset {
        spec: manifest.spec,
        seed: manifest.seed,
        videos,
    })
}
