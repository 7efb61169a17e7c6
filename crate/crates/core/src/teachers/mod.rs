//! Teacher signals: ego-classifier logits, per-frame object logits and
//! hand/object detections.
//!
//! Each teacher is a trait so that a real model can stand in for the
//! analytic stubs in [`stubs`]. No teacher ever sees an action label.

mod jsonl;
pub mod stubs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_data::{BlobCategory, Clip, FrameView, VideoRecord};

pub use jsonl::{read_detections_jsonl, write_detections_jsonl};
pub use stubs::{NoisyBoxDetector, ShakeEgoTeacher, TemplateObjectTeacher};

/// Produces two-way logits (exocentric, egocentric) for a clip.
pub trait EgoTeacher: Send + Sync {
    fn ego_logits(&self, clip: &Clip) -> [f64; 2];
}

/// Produces per-class logits for a single frame.
pub trait ObjectTeacher: Send + Sync {
    fn num_classes(&self) -> usize;
    fn object_logits(&self, frame: &FrameView<'_>) -> Vec<f64>;
}

/// Detects hands and interacted objects in every frame of a video.
pub trait DetectionTeacher: Send + Sync {
    fn detect(&self, video: &VideoRecord, seed: u64) -> Vec<DetectionFrame>;
}

/// A detected box in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
    pub category: BlobCategory,
}

impl DetBox {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = [self.x1, self.y1, self.x2, self.y2, self.score]
            .iter()
            .all(|&v| in_unit(v))
            && self.x1 < self.x2
            && self.y1 < self.y2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBox(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrame {
    pub video_id: String,
    pub frame_index: usize,
    pub boxes: Vec<DetBox>,
}

/// The three teachers used for pseudo-labelling.
pub struct Teachers {
    pub ego: Box<dyn EgoTeacher>,
    pub object: Box<dyn ObjectTeacher>,
    pub detector: Box<dyn DetectionTeacher>,
}

impl Teachers {
    /// Analytic stubs matched to a synthetic dataset spec.
    pub fn stubs(spec: &crate::video_data::DatasetSpec) -> Self {
        Teachers {
            ego: Box::new(ShakeEgoTeacher::default()),
            object: Box::new(TemplateObjectTeacher::for_spec(spec)),
            detector: Box::new(NoisyBoxDetector::default()),
        }
    }
}
