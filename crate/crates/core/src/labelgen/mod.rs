//! Pseudo-label generation: Ego-Score, Object-Score and Interaction-Map
//! targets computed from teacher outputs, plus their archive format.

mod archive;
mod interaction;
mod scores;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::teachers::{DetectionFrame, Teachers};
use crate::video_data::{sample_clips, ClipSampling, VideoRecord};

pub use archive::{read_labels, write_labels, LabelEntry, LabelsManifest, LABELS_MANIFEST};
pub use interaction::{interaction_map, temporal_cell, InteractionMap};
pub use scores::{ego_score, object_score, EgoScore, ObjectScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Softmax temperature for both Ego-Score and Object-Score.
    pub beta: f64,
    /// Clips per video fed to the ego-classifier.
    pub n_clips_ego: usize,
    /// Evenly spaced frames fed to the object recognizer; `None` uses all.
    pub n_frames_obj: Option<usize>,
    /// Detections scoring below this are discarded.
    pub det_threshold: f64,
    pub clip_length: usize,
    pub clip_stride: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            beta: 1.0,
            n_clips_ego: 2,
            n_frames_obj: None,
            det_threshold: 0.5,
            clip_length: 8,
            clip_stride: 1,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.n_clips_ego == 0
            || self.n_frames_obj == Some(0)
            || self.clip_length == 0
            || self.clip_stride == 0
        {
            return Err(Error::InvalidArgument(
                "clip and frame counts must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.det_threshold) {
            return Err(Error::InvalidArgument(format!(
                "det_threshold {} outside [0,1]",
                self.det_threshold
            )));
        }
        Ok(())
    }
}

/// Targets for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLabels {
    pub ego: EgoScore<f32>,
    pub object: ObjectScore<f32>,
    pub interaction: InteractionMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub grid_shape: [usize; 3],
    pub num_object_classes: usize,
    pub entries: BTreeMap<String, VideoLabels>,
}

impl PseudoLabelSet {
    pub fn empty(grid_shape: [usize; 3], num_object_classes: usize) -> Self {
        PseudoLabelSet {
            grid_shape,
            num_object_classes,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, video_id: &str) -> Result<&VideoLabels> {
        self.entries
            .get(video_id)
            .ok_or_else(|| Error::MissingLabels(video_id.to_string()))
    }

    /// Fails on the first video without labels.
    pub fn check_covers<'a>(
        &self,
        videos: impl IntoIterator<Item = &'a VideoRecord>,
    ) -> Result<()> {
        for v in videos {
            self.get(&v.video_id)?;
        }
        Ok(())
    }
}

/// Indices of `n` frames spread evenly over `frames`, at segment centers.
pub fn even_frames(frames: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| ((2 * i + 1) * frames) / (2 * n)).collect()
}

/// Computes all three targets for one video from given detections.
pub fn label_video(
    video: &VideoRecord,
    teachers: &Teachers,
    config: &ScoreConfig,
    grid_shape: [usize; 3],
    detections: &[DetectionFrame],
    seed: u64,
) -> Result<VideoLabels> {
    let clips = sample_clips(
        video,
        config.n_clips_ego,
        config.clip_length,
        config.clip_stride,
        ClipSampling::Uniform,
        seed,
    )?;
    let ego_logits: Vec<[f64; 2]> = clips.iter().map(|c| teachers.ego.ego_logits(c)).collect();
    let ego = ego_score(&ego_logits, config.beta)?;

    let frames = video.num_frames();
    let n_obj = config.n_frames_obj.unwrap_or(frames).min(frames);
    let obj_logits: Vec<Vec<f64>> = even_frames(frames, n_obj)
        .into_iter()
        .map(|k| teachers.object.object_logits(&video.frame_view(k)))
        .collect();
    let object = object_score(&obj_logits, config.beta)?;

    let interaction = interaction_map(detections, grid_shape, frames, config.det_threshold)?;
    Ok(VideoLabels {
        ego: ego.cast(),
        object: object.cast(),
        interaction,
    })
}

fn collect(
    results: Vec<(String, Result<VideoLabels>)>,
    grid_shape: [usize; 3],
    classes: usize,
) -> Result<PseudoLabelSet> {
    let mut set = PseudoLabelSet::empty(grid_shape, classes);
    for (id, r) in results {
        let labels = r.map_err(|e| Error::in_video(&id, e))?;
        set.entries.insert(id, labels);
    }
    Ok(set)
}

/// Runs the teachers over `videos` and builds the label set. Also returns
/// the raw detection stream in video order.
pub fn build_pseudolabels(
    videos: &[&VideoRecord],
    teachers: &Teachers,
    config: &ScoreConfig,
    grid_shape: [usize; 3],
    seed: u64,
) -> Result<(PseudoLabelSet, Vec<DetectionFrame>)> {
    config.validate()?;
    let per_video: Vec<(String, Vec<DetectionFrame>, Result<VideoLabels>)> = videos
        .par_iter()
        .map(|v| {
            let dets = teachers.detector.detect(v, seed);
            let labels = label_video(v, teachers, config, grid_shape, &dets, seed);
            (v.video_id.clone(), dets, labels)
        })
        .collect();
    let mut all_dets = Vec::new();
    let mut results = Vec::with_capacity(per_video.len());
    for (id, dets, labels) in per_video {
        all_dets.extend(dets);
        results.push((id, labels));
    }
    Ok((
        collect(results, grid_shape, teachers.object.num_classes())?,
        all_dets,
    ))
}

/// Like [`build_pseudolabels`] but with an externally supplied detection
/// stream, e.g. read from JSONL. Videos without detections get empty maps.
pub fn build_pseudolabels_from_detections(
    videos: &[&VideoRecord],
    teachers: &Teachers,
    config: &ScoreConfig,
    grid_shape: [usize; 3],
    detections: &[DetectionFrame],
    seed: u64,
) -> Result<PseudoLabelSet> {
    config.validate()?;
    let mut by_video: HashMap<&str, Vec<DetectionFrame>> = HashMap::new();
    for d in detections {
        by_video
            .entry(d.video_id.as_str())
            .or_default()
            .push(d.clone());
    }
    let results = videos
        .par_iter()
        .map(|v| {
            let dets = by_video
                .get(v.video_id.as_str())
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            (
                v.video_id.clone(),
                label_video(v, teachers, config, grid_shape, dets, seed),
            )
        })
        .collect();
    collect(results, grid_shape, teachers.object.num_classes())
}
