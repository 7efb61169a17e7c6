use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DetBox, DetectionFrame, DetectionTeacher, EgoTeacher, ObjectTeacher};
use crate::seed;
use crate::video_data::{object_color, BlobCategory, Clip, DatasetSpec, FrameView, VideoRecord};

/// Ego-classifier stub: logit gap `gain * (ego_param - 0.5)`, split
/// symmetrically around zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShakeEgoTeacher {
    pub gain: f64,
}

impl Default for ShakeEgoTeacher {
    fn default() -> Self {
        ShakeEgoTeacher { gain: 4.0 }
    }
}

impl EgoTeacher for ShakeEgoTeacher {
    fn ego_logits(&self, clip: &Clip) -> [f64; 2] {
        let gap = self.gain * (clip.source_ego_param - 0.5);
        [-0.5 * gap, 0.5 * gap]
    }
}

/// Object-recognizer stub. Class `c` scores every visible object blob by
/// its area and intensity times the cosine similarity between the blob's
/// color and the class template.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateObjectTeacher {
    /// Unit-norm color template per class.
    pub templates: Vec<Vec<f64>>,
    pub gain: f64,
}

impl TemplateObjectTeacher {
    pub fn new(templates: Vec<Vec<f64>>, gain: f64) -> Self {
        let templates = templates
            .into_iter()
            .map(|t| {
                let n = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                t.into_iter().map(|v| v / n).collect()
            })
            .collect();
        TemplateObjectTeacher { templates, gain }
    }

    pub fn for_spec(spec: &DatasetSpec) -> Self {
        let templates = (0..spec.num_object_classes)
            .map(|c| object_color(c, spec.num_object_classes, spec.channels))
            .collect();
        Self::new(templates, 80.0)
    }
}

impl ObjectTeacher for TemplateObjectTeacher {
    fn num_classes(&self) -> usize {
        self.templates.len()
    }

    fn object_logits(&self, frame: &FrameView<'_>) -> Vec<f64> {
        let mut logits = vec![0.0; self.templates.len()];
        for blob in &frame.blobs {
            let (BlobCategory::Object, Some(class)) = (blob.category, blob.object_class) else {
                continue;
            };
            let Some(own) = self.templates.get(class) else {
                continue;
            };
            let mass = PI * blob.half_extent[0] * blob.half_extent[1] * blob.intensity;
            for (z, t) in logits.iter_mut().zip(&self.templates) {
                let sim: f64 = own.iter().zip(t).map(|(a, b)| a * b).sum();
                *z += self.gain * mass * sim;
            }
        }
        logits
    }
}

/// Detector stub: one box per blob per frame, with truncated-Gaussian
/// corner jitter, random misses and uniform confidence scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyBoxDetector {
    pub jitter_sigma: f64,
    pub miss_rate: f64,
    pub score_range: [f64; 2],
}

impl Default for NoisyBoxDetector {
    fn default() -> Self {
        NoisyBoxDetector {
            jitter_sigma: 0.015,
            miss_rate: 0.1,
            score_range: [0.3, 1.0],
        }
    }
}

/// Jitter is truncated at this many standard deviations.
const JITTER_CLIP: f64 = 2.0;

fn truncated_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= JITTER_CLIP {
            return z;
        }
    }
}

impl DetectionTeacher for NoisyBoxDetector {
    fn detect(&self, video: &VideoRecord, seed: u64) -> Vec<DetectionFrame> {
        let mut rng = seed::rng(seed, &[seed::TAG_DETECT, seed::hash_str(&video.video_id)]);
        let [lo, hi] = self.score_range;
        (0..video.num_frames())
            .map(|k| {
                let mut boxes = Vec::new();
                for track in &video.blob_tracks {
                    let missed = rng.random::<f64>() < self.miss_rate;
                    let mut r = track.rect(k);
                    for v in r.iter_mut() {
                        *v = (*v + self.jitter_sigma * truncated_normal(&mut rng)).clamp(0.0, 1.0);
                    }
                    let score = if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    };
                    let (x1, x2) = (r[0].min(r[2]), r[0].max(r[2]));
                    let (y1, y2) = (r[1].min(r[3]), r[1].max(r[3]));
                    if missed || x1 >= x2 || y1 >= y2 {
                        continue;
                    }
                    boxes.push(DetBox {
                        x1,
                        y1,
                        x2,
                        y2,
                        score,
                        category: track.category,
                    });
                }
                DetectionFrame {
                    video_id: video.video_id.clone(),
                    frame_index: k,
                    boxes,
                }
            })
            .collect()
    }
}
