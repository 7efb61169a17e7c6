use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BlobCategory, BlobTrack, Dataset, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Shape and counts of a synthetic dataset.
///
/// Each video shows one hand sweeping across the frame toward a target
/// object, with one or more distractor objects. On the pretrain split the
/// action label pairs the quantized sweep direction with the class of the
/// object the hand ends on; on the fine-tune splits it is that class alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_pretrain: usize,
    pub n_finetune_train: usize,
    pub n_finetune_val: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Number of quantized sweep directions.
    pub num_directions: usize,
    /// Number of object classes, the fine-tune label space.
    pub num_object_classes: usize,
    pub objects_per_video: usize,
    /// Range of hand half-extent before ego scaling.
    pub hand_extent: [f64; 2],
    pub object_extent: [f64; 2],
    /// Range of total hand displacement over the video.
    pub hand_travel: [f64; 2],
    /// Per-frame camera-shake standard deviation at `ego_param = 1`.
    pub shake_amplitude: f64,
    /// Half-width of uniform pixel noise.
    pub pixel_noise: f64,
    pub background: [f64; 2],
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_pretrain: 400,
            n_finetune_train: 200,
            n_finetune_val: 100,
            frames: 16,
            channels: 3,
            height: 32,
            width: 32,
            num_directions: 4,
            num_object_classes: 5,
            objects_per_video: 2,
            hand_extent: [0.07, 0.10],
            object_extent: [0.09, 0.13],
            hand_travel: [0.30, 0.45],
            shake_amplitude: 0.02,
            pixel_noise: 0.03,
            background: [0.05, 0.25],
        }
    }
}

/// Hand growth factor at `ego_param = 1`.
const EGO_HAND_SCALE: f64 = 0.5;

impl DatasetSpec {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Pretrain => self.n_pretrain,
            Split::FinetuneTrain => self.n_finetune_train,
            Split::FinetuneVal => self.n_finetune_val,
        }
    }

    /// Size of the action label space of `split`.
    pub fn num_labels(&self, split: Split) -> usize {
        match split {
            Split::Pretrain => self.num_directions * self.num_object_classes,
            Split::FinetuneTrain | Split::FinetuneVal => self.num_object_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.frames == 0 || self.channels == 0 {
            return bad("frames and channels must be positive".into());
        }
        if self.height < 4 || self.width < 4 {
            return bad(format!(
                "frame resolution {}x{} below 4x4",
                self.height, self.width
            ));
        }
        if self.num_directions < 2 || self.num_object_classes < 2 {
            return bad("need at least 2 directions and 2 object classes".into());
        }
        if self.objects_per_video == 0 || self.objects_per_video > self.num_object_classes {
            return bad(format!(
                "objects_per_video {} must be in 1..={}",
                self.objects_per_video, self.num_object_classes
            ));
        }
        for (name, [lo, hi]) in [
            ("hand_extent", self.hand_extent),
            ("object_extent", self.object_extent),
            ("hand_travel", self.hand_travel),
            ("background", self.background),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return bad(format!(
                    "{name} range [{lo}, {hi}] is not ordered and nonnegative"
                ));
            }
        }
        if self.hand_extent[0] <= 0.0 || self.object_extent[0] <= 0.0 {
            return bad("blob extents must be positive".into());
        }
        // Smallest blob must span at least one pixel.
        let min_px = self.height.min(self.width) as f64;
        for (name, lo) in [
            ("hand", self.hand_extent[0]),
            ("object", self.object_extent[0]),
        ] {
            if 2.0 * lo * min_px < 1.0 {
                return bad(format!(
                    "{name} extent {lo} is below one pixel at {}x{}",
                    self.height, self.width
                ));
            }
        }
        let hand_span =
            2.0 * self.hand_extent[1] * (1.0 + EGO_HAND_SCALE) * 1.1 + self.hand_travel[1];
        if hand_span >= 1.0 {
            return bad(format!(
                "hand extent plus travel ({hand_span:.3}) does not fit the frame"
            ));
        }
        if 2.0 * self.object_extent[1] * 1.1 >= 1.0 {
            return bad("object extent does not fit the frame".into());
        }
        if self.background[1] > 1.0
            || !(0.0..=0.5).contains(&self.pixel_noise)
            || self.shake_amplitude < 0.0
        {
            return bad("background, pixel_noise or shake_amplitude out of range".into());
        }
        Ok(())
    }
}

/// RGB-like color of a hand for `channels` channels.
pub fn hand_color(channels: usize) -> Vec<f64> {
    (0..channels)
        .map(|ch| (1.0 - 0.15 * ch as f64).max(0.3))
        .collect()
}

/// Color wheel position of object class `class` out of `classes`.
pub fn object_color(class: usize, classes: usize, channels: usize) -> Vec<f64> {
    (0..channels)
        .map(|ch| {
            0.5 + 0.5
                * (2.0 * PI * (class as f64 / classes as f64 - ch as f64 / channels as f64)).cos()
        })
        .collect()
}

fn track_color(track: &BlobTrack, spec: &DatasetSpec) -> Vec<f64> {
    match (track.category, track.object_class) {
        (BlobCategory::Object, Some(c)) => object_color(c, spec.num_object_classes, spec.channels),
        _ => hand_color(spec.channels),
    }
}

/// Renders frame `k` without noise. Later tracks paint over earlier ones.
pub fn render_frame(
    tracks: &[BlobTrack],
    k: usize,
    background: f64,
    spec: &DatasetSpec,
) -> Vec<f32> {
    let (c, h, w) = (spec.channels, spec.height, spec.width);
    let mut out = vec![background as f32; c * h * w];
    for track in tracks {
        let color = track_color(track, spec);
        let [cx, cy] = track.center_path[k];
        let [rx, ry] = track.half_extent;
        let y_lo = (((cy - ry) * h as f64 - 0.5).floor().max(0.0)) as usize;
        let y_hi = (((cy + ry) * h as f64 + 0.5).ceil() as usize).min(h);
        let x_lo = (((cx - rx) * w as f64 - 0.5).floor().max(0.0)) as usize;
        let x_hi = (((cx + rx) * w as f64 + 0.5).ceil() as usize).min(w);
        for y in y_lo..y_hi {
            let dy = ((y as f64 + 0.5) / h as f64 - cy) / ry;
            for x in x_lo..x_hi {
                let dx = ((x as f64 + 0.5) / w as f64 - cx) / rx;
                if dx * dx + dy * dy <= 1.0 {
                    for (ch, col) in color.iter().enumerate() {
                        out[(ch * h + y) * w + x] = (col * track.intensity) as f32;
                    }
                }
            }
        }
    }
    out
}

fn rect_intersection_area(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = a[2].min(b[2]) - a[0].max(b[0]);
    let h = a[3].min(b[3]) - a[1].max(b[1]);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

fn hand_track(tracks: &[BlobTrack]) -> Option<&BlobTrack> {
    tracks.iter().find(|t| t.category == BlobCategory::Hand)
}

/// Quantized direction of the hand's net displacement: label `a` covers
/// angles around `2πa/K` (image y axis pointing down).
pub fn motion_direction_label(tracks: &[BlobTrack], num_directions: usize) -> usize {
    let Some(hand) = hand_track(tracks) else {
        return 0;
    };
    let first = hand.center_path[0];
    let last = hand.center_path[hand.center_path.len() - 1];
    let angle = (last[1] - first[1])
        .atan2(last[0] - first[0])
        .rem_euclid(2.0 * PI);
    let sector = 2.0 * PI / num_directions as f64;
    ((angle / sector).round() as usize) % num_directions
}

/// Class of the object with the largest overlap with the hand at the last
/// frame, or of the nearest object when nothing overlaps.
pub fn contact_label(tracks: &[BlobTrack]) -> usize {
    let Some(hand) = hand_track(tracks) else {
        return 0;
    };
    let k = hand.center_path.len() - 1;
    let hand_rect = hand.rect(k);
    let hc = hand.center_path[k];
    let mut best: Option<(f64, f64, usize)> = None;
    for t in tracks.iter().filter(|t| t.category == BlobCategory::Object) {
        let area = rect_intersection_area(hand_rect, t.rect(k));
        let c = t.center_path[k];
        let dist = (c[0] - hc[0]).hypot(c[1] - hc[1]);
        let key = (area, -dist, t.object_class.unwrap_or(0));
        if best.is_none_or(|b| (key.0, key.1) > (b.0, b.1)) {
            best = Some(key);
        }
    }
    best.map(|b| b.2).unwrap_or(0)
}

/// Pretrain action: sweep direction paired with the class of the object
/// reached, `direction * num_object_classes + class`.
pub fn pretrain_label(tracks: &[BlobTrack], spec: &DatasetSpec) -> usize {
    motion_direction_label(tracks, spec.num_directions) * spec.num_object_classes
        + contact_label(tracks)
}

/// Multi-hot vector of object classes whose box meets a hand box with
/// positive area at some frame.
pub fn touched_classes(tracks: &[BlobTrack], num_object_classes: usize) -> Vec<bool> {
    let mut out = vec![false; num_object_classes];
    let hands: Vec<&BlobTrack> = tracks
        .iter()
        .filter(|t| t.category == BlobCategory::Hand)
        .collect();
    for obj in tracks.iter().filter(|t| t.category == BlobCategory::Object) {
        let Some(c) = obj.object_class else { continue };
        let touched = (0..obj.center_path.len()).any(|k| {
            hands
                .iter()
                .any(|h| rect_intersection_area(h.rect(k), obj.rect(k)) > 0.0)
        });
        if touched && c < num_object_classes {
            out[c] = true;
        }
    }
    out
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn clamp_center(c: [f64; 2], r: [f64; 2]) -> [f64; 2] {
    [c[0].clamp(r[0], 1.0 - r[0]), c[1].clamp(r[1], 1.0 - r[1])]
}

fn generate_video(spec: &DatasetSpec, seed_base: u64, split: Split, index: usize) -> VideoRecord {
    let mut rng = seed::rng(seed_base, &[seed::TAG_VIDEO, split.code(), index as u64]);
    let t_len = spec.frames;
    let ego_param: f64 = rng.random_range(0.0..=1.0);
    let background = uniform(&mut rng, spec.background);

    // Hand sweep.
    let direction = rng.random_range(0..spec.num_directions);
    let jitter = rng.random_range(-0.3..0.3) * PI / spec.num_directions as f64;
    let theta = 2.0 * PI * direction as f64 / spec.num_directions as f64 + jitter;
    let size = uniform(&mut rng, spec.hand_extent) * (1.0 + EGO_HAND_SCALE * ego_param);
    let hand_r = [
        size * rng.random_range(0.9..1.1),
        size * rng.random_range(0.9..1.1),
    ];
    let travel = uniform(&mut rng, spec.hand_travel);
    let disp = [travel * theta.cos(), travel * theta.sin()];
    let mut start = [0.0; 2];
    for a in 0..2 {
        let lo = hand_r[a] + (-disp[a]).max(0.0);
        let hi = 1.0 - hand_r[a] - disp[a].max(0.0);
        start[a] = uniform(&mut rng, [lo, hi]);
    }
    let denom = (t_len.max(2) - 1) as f64;
    let hand_path: Vec<[f64; 2]> = (0..t_len)
        .map(|k| {
            let f = if t_len == 1 { 0.0 } else { k as f64 / denom };
            [start[0] + disp[0] * f, start[1] + disp[1] * f]
        })
        .collect();
    let end = hand_path[t_len - 1];

    // Objects: the target sits under the hand's final position.
    let classes: Vec<usize> =
        sample(&mut rng, spec.num_object_classes, spec.objects_per_video).into_vec();
    let sweep = {
        let (x0, x1) = (start[0].min(end[0]), start[0].max(end[0]));
        let (y0, y1) = (start[1].min(end[1]), start[1].max(end[1]));
        [
            x0 - hand_r[0],
            y0 - hand_r[1],
            x1 + hand_r[0],
            y1 + hand_r[1],
        ]
    };
    let mut placed: Vec<([f64; 2], [f64; 2], usize)> = Vec::new();
    for (i, &class) in classes.iter().enumerate() {
        let r = [
            uniform(&mut rng, spec.object_extent),
            uniform(&mut rng, spec.object_extent),
        ];
        let center = if i == 0 {
            let off = [
                rng.random_range(-0.5..0.5) * hand_r[0],
                rng.random_range(-0.5..0.5) * hand_r[1],
            ];
            clamp_center([end[0] + off[0], end[1] + off[1]], r)
        } else {
            let mut c = [0.5, 0.5];
            for _ in 0..100 {
                c = [
                    rng.random_range(r[0]..1.0 - r[0]),
                    rng.random_range(r[1]..1.0 - r[1]),
                ];
                let rect = [c[0] - r[0], c[1] - r[1], c[0] + r[0], c[1] + r[1]];
                let clear = rect_intersection_area(rect, sweep) == 0.0
                    && placed.iter().all(|(pc, pr, _)| {
                        rect_intersection_area(
                            rect,
                            [pc[0] - pr[0], pc[1] - pr[1], pc[0] + pr[0], pc[1] + pr[1]],
                        ) == 0.0
                    });
                if clear {
                    break;
                }
            }
            c
        };
        placed.push((center, r, class));
    }

    // Camera shake moves everything together.
    let shake_sd = ego_param * spec.shake_amplitude;
    let shake: Vec<[f64; 2]> = (0..t_len)
        .map(|_| {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            [shake_sd * dx, shake_sd * dy]
        })
        .collect();
    let shaken = |path: &dyn Fn(usize) -> [f64; 2], r: [f64; 2]| -> Vec<[f64; 2]> {
        (0..t_len)
            .map(|k| {
                let p = path(k);
                clamp_center([p[0] + shake[k][0], p[1] + shake[k][1]], r)
            })
            .collect()
    };

    let mut tracks = Vec::with_capacity(placed.len() + 1);
    for (center, r, class) in &placed {
        tracks.push(BlobTrack {
            category: BlobCategory::Object,
            object_class: Some(*class),
            center_path: shaken(&|_| *center, *r),
            half_extent: *r,
            intensity: rng.random_range(0.75..=1.0),
        });
    }
    tracks.push(BlobTrack {
        category: BlobCategory::Hand,
        object_class: None,
        center_path: shaken(&|k| hand_path[k], hand_r),
        half_extent: hand_r,
        intensity: rng.random_range(0.8..=1.0),
    });

    let mut frames = Vec::with_capacity(t_len * spec.channels * spec.height * spec.width);
    for k in 0..t_len {
        let mut frame = render_frame(&tracks, k, background, spec);
        if spec.pixel_noise > 0.0 {
            for v in frame.iter_mut() {
                let n = rng.random_range(-spec.pixel_noise..=spec.pixel_noise);
                *v = (*v as f64 + n).clamp(0.0, 1.0) as f32;
            }
        }
        frames.extend_from_slice(&frame);
    }

    let action_label = match split {
        Split::Pretrain => pretrain_label(&tracks, spec),
        Split::FinetuneTrain | Split::FinetuneVal => contact_label(&tracks),
    };

    VideoRecord {
        video_id: format!("{}_{:05}", split.prefix(), index),
        frames: Tensor::from_vec(&[t_len, spec.channels, spec.height, spec.width], frames)
            .expect("frame buffer"),
        action_label,
        ego_param,
        background,
        blob_tracks: tracks,
        split,
    }
}

/// Generates every split of `spec`. Deterministic in `(spec, seed)`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let jobs: Vec<(Split, usize)> = Split::ALL
        .iter()
        .flat_map(|&s| (0..spec.count(s)).map(move |i| (s, i)))
        .collect();
    let videos = jobs
        .par_iter()
        .map(|&(s, i)| generate_video(spec, seed, s, i))
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        seed,
        videos,
    })
}
