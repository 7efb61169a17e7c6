use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Clip, VideoRecord};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipSampling {
    /// Evenly spaced start offsets, used for inference and label generation.
    Uniform,
    /// Independent uniform start offsets drawn from the seed.
    #[default]
    Random,
}

/// Start offsets of `n_clips` clips of `clip_length` frames at `stride`.
///
/// Valid starts are `0..=frames - clip_length * stride`. Uniform placement
/// puts the first clip at 0 and the last at the final valid start, rounding
/// the intermediate ones to the nearest frame; a single uniform clip is
/// centered.
pub fn clip_starts(
    frames: usize,
    n_clips: usize,
    clip_length: usize,
    stride: usize,
    mode: ClipSampling,
    seed: u64,
) -> Result<Vec<usize>> {
    if n_clips == 0 || clip_length == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "n_clips, clip_length and stride must be positive".into(),
        ));
    }
    let needed = clip_length * stride;
    if needed > frames {
        return Err(Error::ClipTooLong { needed, frames });
    }
    let max_start = frames - needed;
    Ok(match mode {
        ClipSampling::Uniform if n_clips == 1 => vec![max_start / 2],
        ClipSampling::Uniform => {
            let d = n_clips - 1;
            (0..n_clips)
                .map(|i| (2 * i * max_start + d) / (2 * d))
                .collect()
        }
        ClipSampling::Random => {
            let mut rng = seed::rng(seed, &[seed::TAG_CLIPS]);
            (0..n_clips)
                .map(|_| rng.random_range(0..=max_start))
                .collect()
        }
    })
}

pub fn extract_clip(
    video: &VideoRecord,
    start: usize,
    clip_length: usize,
    stride: usize,
) -> Result<Clip> {
    let frames = video.num_frames();
    let needed = clip_length * stride;
    if clip_length == 0
        || stride == 0
        || start + (clip_length - 1) * stride >= frames
        || needed > frames
    {
        return Err(Error::ClipTooLong {
            needed: start + needed,
            frames,
        });
    }
    let [c, h, w] = video.frame_shape();
    let frame_indices: Vec<usize> = (0..clip_length).map(|i| start + i * stride).collect();
    let mut data = Vec::with_capacity(clip_length * c * h * w);
    for &k in &frame_indices {
        data.extend_from_slice(video.frame_pixels(k));
    }
    Ok(Clip {
        video_id: video.video_id.clone(),
        frame_indices,
        frames: Tensor::from_vec(&[clip_length, c, h, w], data)?,
        source_ego_param: video.ego_param,
    })
}

/// Cuts `n_clips` clips from `video`. Random placement is keyed by
/// `(seed, video_id)`.
pub fn sample_clips(
    video: &VideoRecord,
    n_clips: usize,
    clip_length: usize,
    stride: usize,
    mode: ClipSampling,
    seed: u64,
) -> Result<Vec<Clip>> {
    let key = seed::derive(seed, &[seed::hash_str(&video.video_id)]);
    clip_starts(video.num_frames(), n_clips, clip_length, stride, mode, key)?
        .into_iter()
        .map(|s| extract_clip(video, s, clip_length, stride))
        .collect()
}
