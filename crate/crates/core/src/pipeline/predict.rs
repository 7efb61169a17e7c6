use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_average_precision, top_k_result, EvalResult};
use crate::model::{Encoder, HeadMask, Model};
use crate::scalar::{softmax, Scalar};
use crate::video_data::{sample_clips, touched_classes, Clip, ClipSampling, VideoRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    TemporalMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    Map,
    Top1,
    Top5,
}

/// Combines per-clip score vectors elementwise.
pub fn aggregate(clip_scores: &[Vec<f64>], agg: Aggregation) -> Result<Vec<f64>> {
    let first = clip_scores
        .first()
        .ok_or_else(|| Error::InvalidArgument("no clip scores".into()))?;
    let mut out = first.clone();
    for s in &clip_scores[1..] {
        if s.len() != out.len() {
            return Err(Error::Shape {
                expected: vec![out.len()],
                got: vec![s.len()],
            });
        }
        for (o, &v) in out.iter_mut().zip(s) {
            match agg {
                Aggregation::Mean => *o += v,
                Aggregation::TemporalMax => *o = o.max(v),
            }
        }
    }
    if agg == Aggregation::Mean {
        let n = clip_scores.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
    Ok(out)
}

/// Channel-first model input for `clip`: each channel has its clip mean
/// removed and is scaled by [`INPUT_SCALE`].
pub fn model_input<T: Scalar>(clip: &Clip) -> crate::Tensor<T> {
    let mut x = clip.to_input::<T>();
    let per_channel = x.len() / x.shape()[0];
    let inv = T::one() / T::from_usize(per_channel).expect("size");
    let k = T::lit(INPUT_SCALE);
    for ch in x.as_mut_slice().chunks_mut(per_channel) {
        let mean = ch.iter().copied().sum::<T>() * inv;
        ch.iter_mut().for_each(|v| *v = (*v - mean) * k);
    }
    x
}

pub const INPUT_SCALE: f64 = 4.0;

/// Classifier probabilities for one clip input `[C, L, H, W]`.
pub fn clip_probabilities<T: Scalar, E: Encoder<T>>(
    model: &Model<T, E>,
    input: &crate::Tensor<T>,
) -> Result<Vec<f64>> {
    let (feature, _) = model.backbone.forward(input)?;
    let (out, _) = model.heads.forward(&feature, HeadMask::ACT_ONLY)?;
    Ok(softmax(&out.act_logits.expect("act head"))
        .into_iter()
        .map(|p| p.to_f64_lossy())
        .collect())
}

/// Video-level scores from `n_clips` uniformly placed clips.
pub fn predict_video<T: Scalar, E: Encoder<T>>(
    model: &Model<T, E>,
    video: &VideoRecord,
    n_clips: usize,
    clip_length: usize,
    stride: usize,
    agg: Aggregation,
) -> Result<Vec<f64>> {
    let clips = sample_clips(
        video,
        n_clips,
        clip_length,
        stride,
        ClipSampling::Uniform,
        0,
    )?;
    let scores = clips
        .iter()
        .map(|c| clip_probabilities(model, &model_input::<T>(c)))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&scores, agg)
}

/// Evaluates `model` over `videos`. mAP uses the multi-hot set of touched
/// object classes; top-k uses the action label.
pub fn evaluate<T: Scalar, E: Encoder<T>>(
    model: &Model<T, E>,
    videos: &[&VideoRecord],
    metric: EvalMetric,
    n_clips: usize,
    clip_length: usize,
    stride: usize,
    agg: Aggregation,
) -> Result<EvalResult> {
    let scores: Vec<Vec<f64>> = videos
        .par_iter()
        .map(|v| {
            predict_video(model, v, n_clips, clip_length, stride, agg)
                .map_err(|e| Error::in_video(&v.video_id, e))
        })
        .collect::<Result<_>>()?;
    match metric {
        EvalMetric::Map => {
            let classes = model.heads.classifier.outputs();
            let sets: Vec<Vec<bool>> = videos
                .iter()
                .map(|v| touched_classes(&v.blob_tracks, classes))
                .collect();
            mean_average_precision(&scores, &sets)
        }
        EvalMetric::Top1 | EvalMetric::Top5 => {
            let k = if metric == EvalMetric::Top1 { 1 } else { 5 };
            let labels: Vec<usize> = videos.iter().map(|v| v.action_label).collect();
            top_k_result(&scores, &labels, k)
        }
    }
}
