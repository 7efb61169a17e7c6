//! Synthetic videos with planted hand/object tracks, clip extraction, and
//! the dataset directory format.

mod clips;
mod io;
mod synth;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use clips::{clip_starts, extract_clip, sample_clips, ClipSampling};
pub use io::{read_dataset, write_dataset, DatasetManifest, VideoEntry, MANIFEST_FILE};
pub use synth::{
    contact_label, generate_dataset, hand_color, motion_direction_label, object_color,
    pretrain_label, render_frame, touched_classes, DatasetSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pretrain,
    FinetuneTrain,
    FinetuneVal,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Pretrain, Split::FinetuneTrain, Split::FinetuneVal];

    pub fn prefix(self) -> &'static str {
        match self {
            Split::Pretrain => "pre",
            Split::FinetuneTrain => "ft",
            Split::FinetuneVal => "val",
        }
    }

    fn code(self) -> u64 {
        match self {
            Split::Pretrain => 0,
            Split::FinetuneTrain => 1,
            Split::FinetuneVal => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobCategory {
    Hand,
    Object,
}

/// A planted hand or object trajectory in normalized `[0,1]` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobTrack {
    pub category: BlobCategory,
    /// Object class for `Object` blobs; selects the rendered color.
    pub object_class: Option<usize>,
    /// Per-frame `(cx, cy)`.
    pub center_path: Vec<[f64; 2]>,
    /// `(rx, ry)`.
    pub half_extent: [f64; 2],
    pub intensity: f64,
}

impl BlobTrack {
    /// Axis-aligned bounding rectangle `[x1, y1, x2, y2]` at frame `k`.
    pub fn rect(&self, k: usize) -> [f64; 4] {
        let [cx, cy] = self.center_path[k];
        let [rx, ry] = self.half_extent;
        [cx - rx, cy - ry, cx + rx, cy + ry]
    }
}

/// Blob state at a single frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedBlob {
    pub category: BlobCategory,
    pub object_class: Option<usize>,
    pub center: [f64; 2],
    pub half_extent: [f64; 2],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// `[T, C, H, W]`, values in `[0, 1]`.
    pub frames: Tensor<f32>,
    pub action_label: usize,
    /// Planted camera-shake intensity in `[0, 1]`.
    pub ego_param: f64,
    /// Background gray level the frames were rendered on.
    pub background: f64,
    pub blob_tracks: Vec<BlobTrack>,
    pub split: Split,
}

impl VideoRecord {
    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    /// `[C, H, W]`.
    pub fn frame_shape(&self) -> [usize; 3] {
        let s = self.frames.shape();
        [s[1], s[2], s[3]]
    }

    pub fn frame_pixels(&self, k: usize) -> &[f32] {
        let [c, h, w] = self.frame_shape();
        let n = c * h * w;
        &self.frames.as_slice()[k * n..(k + 1) * n]
    }

    /// The pixels and planted blobs of frame `k`, without the action label.
    pub fn frame_view(&self, k: usize) -> FrameView<'_> {
        FrameView {
            frame_index: k,
            shape: self.frame_shape(),
            pixels: self.frame_pixels(k),
            blobs: self
                .blob_tracks
                .iter()
                .map(|t| PlacedBlob {
                    category: t.category,
                    object_class: t.object_class,
                    center: t.center_path[k],
                    half_extent: t.half_extent,
                    intensity: t.intensity,
                })
                .collect(),
        }
    }
}

/// One frame as seen by a per-frame teacher.
#[derive(Debug, Clone)]
pub struct FrameView<'a> {
    pub frame_index: usize,
    /// `[C, H, W]`.
    pub shape: [usize; 3],
    pub pixels: &'a [f32],
    pub blobs: Vec<PlacedBlob>,
}

/// A fixed-stride run of frames cut from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub video_id: String,
    pub frame_indices: Vec<usize>,
    /// `[L, C, H, W]`.
    pub frames: Tensor<f32>,
    /// Ego parameter of the source video, consumed only by ego teachers.
    pub source_ego_param: f64,
}

impl Clip {
    /// Channel-first model input `[C, L, H, W]`.
    pub fn to_input<T: crate::Scalar>(&self) -> Tensor<T> {
        let s = self.frames.shape();
        let (l, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let src = self.frames.as_slice();
        let mut out = Vec::with_capacity(src.len());
        for ch in 0..c {
            for t in 0..l {
                let off = (t * c + ch) * plane;
                out.extend(src[off..off + plane].iter().map(|&v| T::of_f32(v)));
            }
        }
        Tensor::from_vec(&[c, l, h, w], out).expect("clip input shape")
    }
}

/// A generated dataset together with the spec and seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&VideoRecord> {
        self.videos.iter().filter(|v| v.split == split).collect()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }
}
