mod common;

use std::f64::consts::PI;

use common::softmax_naive;
use egoexo::video_data::{
    clip_starts, contact_label, extract_clip, generate_dataset, pretrain_label, BlobCategory,
    ClipSampling, Dataset, DatasetSpec, Split, VideoRecord,
};

fn noiseless(n: [usize; 3]) -> DatasetSpec {
    DatasetSpec {
        n_pretrain: n[0],
        n_finetune_train: n[1],
        n_finetune_val: n[2],
        pixel_noise: 0.0,
        ..DatasetSpec::default()
    }
}

/// Every pixel recomputed from the tracks: start from the background and
/// let each track whose ellipse covers the pixel center overwrite it.
fn render_by_hand(v: &VideoRecord, k: usize, spec: &DatasetSpec) -> Vec<f32> {
    let (c, h, w) = (spec.channels, spec.height, spec.width);
    let color = |cat: BlobCategory, class: Option<usize>, ch: usize| match (cat, class) {
        (BlobCategory::Object, Some(cl)) => {
            let phase = cl as f64 / spec.num_object_classes as f64 - ch as f64 / c as f64;
            0.5 + 0.5 * (2.0 * PI * phase).cos()
        }
        _ => (1.0 - 0.15 * ch as f64).max(0.3),
    };
    let mut out = vec![0f32; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let mut px: Vec<f32> = vec![v.background as f32; c];
            for t in &v.blob_tracks {
                let [cx, cy] = t.center_path[k];
                let [rx, ry] = t.half_extent;
                let dx = ((x as f64 + 0.5) / w as f64 - cx) / rx;
                let dy = ((y as f64 + 0.5) / h as f64 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    for (ch, p) in px.iter_mut().enumerate() {
                        *p = (color(t.category, t.object_class, ch) * t.intensity) as f32;
                    }
                }
            }
            for ch in 0..c {
                out[(ch * h + y) * w + x] = px[ch];
            }
        }
    }
    out
}

#[test]
fn frames_match_a_per_pixel_render() {
    let spec = noiseless([4, 3, 3]);
    let dataset = generate_dataset(&spec, 3).unwrap();
    assert_eq!(dataset.videos.len(), 10);
    for v in &dataset.videos {
        for k in 0..v.num_frames() {
            assert_eq!(
                v.frame_pixels(k),
                render_by_hand(v, k, &spec),
                "{} frame {k}",
                v.video_id
            );
        }
    }
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    let spec = noiseless([3, 2, 2]);
    let a = generate_dataset(&spec, 5).unwrap();
    assert_eq!(a, generate_dataset(&spec, 5).unwrap());
    assert_ne!(
        a.videos[0].frames,
        generate_dataset(&spec, 6).unwrap().videos[0].frames
    );
}

#[test]
fn labels_follow_the_planted_tracks() {
    let spec = DatasetSpec {
        n_pretrain: 60,
        n_finetune_train: 30,
        n_finetune_val: 30,
        ..DatasetSpec::default()
    };
    let dataset = generate_dataset(&spec, 7).unwrap();
    for v in &dataset.videos {
        let expected = match v.split {
            Split::Pretrain => pretrain_label(&v.blob_tracks, &spec),
            _ => contact_label(&v.blob_tracks),
        };
        assert_eq!(v.action_label, expected);
        assert!(v.action_label < spec.num_labels(v.split));
        assert!(v.frames.as_slice().iter().all(|p| (0.0..=1.0).contains(p)));
        let hands = v
            .blob_tracks
            .iter()
            .filter(|t| t.category == BlobCategory::Hand);
        assert_eq!(hands.count(), 1);
    }
    let ids: std::collections::BTreeSet<&str> =
        dataset.videos.iter().map(|v| v.video_id.as_str()).collect();
    assert_eq!(ids.len(), dataset.videos.len());
}

#[test]
fn uniform_clip_starts_on_a_long_video() {
    let starts = clip_starts(64, 10, 8, 1, ClipSampling::Uniform, 0).unwrap();
    let expected: Vec<usize> = (0..10)
        .map(|i| (i as f64 * 56.0 / 9.0).round() as usize)
        .collect();
    assert_eq!(starts, expected);
    assert_eq!(
        clip_starts(64, 1, 8, 2, ClipSampling::Uniform, 0).unwrap(),
        vec![24]
    );
}

#[test]
fn random_clip_starts_stay_in_range() {
    for seed in 0..50 {
        let starts = clip_starts(20, 7, 4, 3, ClipSampling::Random, seed).unwrap();
        assert!(starts.iter().all(|&s| s <= 8));
        assert_eq!(
            starts,
            clip_starts(20, 7, 4, 3, ClipSampling::Random, seed).unwrap()
        );
    }
    assert!(clip_starts(20, 1, 8, 3, ClipSampling::Uniform, 0).is_err());
    assert!(clip_starts(20, 0, 4, 1, ClipSampling::Uniform, 0).is_err());
}

#[test]
fn clips_copy_the_right_frames() {
    let dataset = generate_dataset(&noiseless([1, 1, 1]), 1).unwrap();
    let v = &dataset.videos[0];
    let clip = extract_clip(v, 3, 4, 2).unwrap();
    assert_eq!(clip.frame_indices, vec![3, 5, 7, 9]);
    let [c, h, w] = v.frame_shape();
    for (i, &k) in clip.frame_indices.iter().enumerate() {
        let n = c * h * w;
        assert_eq!(
            &clip.frames.as_slice()[i * n..(i + 1) * n],
            v.frame_pixels(k)
        );
    }
    assert!(extract_clip(v, 10, 4, 2).is_err());
}

/// Color histograms of the first and last frames, 4 bins per channel.
/// The hand ends up covering the contacted object, so the difference
/// between the two carries the label.
fn features(v: &VideoRecord) -> Vec<f64> {
    let [c, h, w] = v.frame_shape();
    let bin = |p: f32| ((p * 4.0) as usize).min(3);
    let hist = |k: usize| {
        let px = v.frame_pixels(k);
        let mut f = vec![0.0; 4usize.pow(c as u32)];
        for i in 0..h * w {
            let cell = (0..c).fold(0, |acc, ch| acc * 4 + bin(px[ch * h * w + i]));
            f[cell] += 1.0 / (h * w) as f64;
        }
        f
    };
    let mut f = hist(0);
    f.extend(hist(v.num_frames() - 1));
    f
}

/// Multinomial logistic regression by full-batch gradient descent.
fn fit(xs: &[Vec<f64>], ys: &[usize], classes: usize) -> Vec<Vec<f64>> {
    let d = xs[0].len();
    let mut wts = vec![vec![0.0; d]; classes];
    for _ in 0..1000 {
        let mut g = vec![vec![0.0; d]; classes];
        for (x, &y) in xs.iter().zip(ys) {
            let z: Vec<f64> = wts
                .iter()
                .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect();
            let p = softmax_naive(&z);
            for c in 0..classes {
                let r = p[c] - if c == y { 1.0 } else { 0.0 };
                g[c].iter_mut().zip(x).for_each(|(gi, xi)| *gi += r * xi);
            }
        }
        for (w, g) in wts.iter_mut().zip(&g) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= 0.5 * (gi / xs.len() as f64 + 1e-3 * *wi);
            }
        }
    }
    wts
}

/// Held-out accuracy of a linear probe on standardized features.
fn probe_accuracy(
    dataset: &Dataset,
    train: Split,
    test: Split,
    classes: usize,
    features: fn(&VideoRecord) -> Vec<f64>,
) -> f64 {
    let raw = |s: Split| -> (Vec<Vec<f64>>, Vec<usize>) {
        let vs = dataset.split(s);
        (
            vs.iter().map(|v| features(v)).collect(),
            vs.iter().map(|v| v.action_label).collect(),
        )
    };
    let (mut train_x, train_y) = raw(train);
    let (mut test_x, test_y) = raw(test);
    let d = train_x[0].len();
    let n = train_x.len() as f64;
    for k in 0..d {
        let mean = train_x.iter().map(|x| x[k]).sum::<f64>() / n;
        let sd = (train_x.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-6);
        for x in train_x.iter_mut().chain(test_x.iter_mut()) {
            x[k] = (x[k] - mean) / sd;
        }
    }
    for x in train_x.iter_mut().chain(test_x.iter_mut()) {
        x.push(1.0);
    }
    let wts = fit(&train_x, &train_y, classes);
    let correct = test_x
        .iter()
        .zip(&test_y)
        .filter(|(x, &y)| {
            let z: Vec<f64> = wts
                .iter()
                .map(|w| w.iter().zip(*x).map(|(a, b)| a * b).sum())
                .collect();
            (0..z.len()).max_by(|&a, &b| z[a].total_cmp(&z[b])) == Some(y)
        })
        .count();
    correct as f64 / test_y.len() as f64
}

/// Mean frame average-pooled to 8x8 per channel.
fn mean_frame(v: &VideoRecord) -> Vec<f64> {
    let [c, h, w] = v.frame_shape();
    let (bh, bw) = (h / 8, w / 8);
    let mut f = vec![0.0; c * 64];
    for k in 0..v.num_frames() {
        let px = v.frame_pixels(k);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    f[(ch * 8 + y / bh) * 8 + x / bw] += px[(ch * h + y) * w + x] as f64;
                }
            }
        }
    }
    let n = (v.num_frames() * bh * bw) as f64;
    f.iter_mut().for_each(|x| *x /= n);
    f
}

#[test]
fn pretrain_labels_are_learnable_from_mean_frames() {
    let spec = DatasetSpec {
        n_pretrain: 800,
        n_finetune_train: 0,
        n_finetune_val: 0,
        ..DatasetSpec::default()
    };
    let dataset = generate_dataset(&spec, 12).unwrap();
    // Train on the first 600, test on the last 200.
    let mut split = dataset.clone();
    for (i, v) in split.videos.iter_mut().enumerate() {
        v.split = if i < 600 {
            Split::Pretrain
        } else {
            Split::FinetuneVal
        };
    }
    let classes = spec.num_labels(Split::Pretrain);
    let acc = probe_accuracy(
        &split,
        Split::Pretrain,
        Split::FinetuneVal,
        classes,
        mean_frame,
    );
    // Three binomial standard errors above chance on 200 test videos.
    let chance = 1.0 / classes as f64;
    let bar = chance + 3.0 * (chance * (1.0 - chance) / 200.0).sqrt();
    assert!(acc > bar, "accuracy {acc}, chance {chance}");
}

#[test]
fn finetune_labels_are_learnable_from_pixels() {
    let spec = DatasetSpec {
        n_pretrain: 0,
        n_finetune_train: 400,
        n_finetune_val: 200,
        ..DatasetSpec::default()
    };
    let dataset = generate_dataset(&spec, 11).unwrap();
    let acc = probe_accuracy(
        &dataset,
        Split::FinetuneTrain,
        Split::FinetuneVal,
        spec.num_object_classes,
        features,
    );
    // Chance is 1 / 5.
    assert!(acc >= 0.6, "linear probe accuracy {acc}");
}

#[test]
fn empty_spec_gives_an_empty_dataset() {
    let dataset = generate_dataset(&noiseless([0, 0, 0]), 7).unwrap();
    assert!(dataset.videos.is_empty());
}

#[test]
fn enough_uniform_clips_cover_every_frame() {
    for (frames, len) in [(16usize, 8usize), (64, 8), (30, 7), (9, 4)] {
        let n = frames.div_ceil(len);
        let starts = clip_starts(frames, n, len, 1, ClipSampling::Uniform, 0).unwrap();
        let covered: std::collections::BTreeSet<usize> =
            starts.iter().flat_map(|&s| s..s + len).collect();
        assert_eq!(covered.len(), frames, "{frames} frames, clips of {len}");
    }
}
