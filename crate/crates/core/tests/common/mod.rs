//! Independent oracles and fixtures shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

pub mod checks;

use egoexo::labelgen::{build_pseudolabels, PseudoLabelSet, ScoreConfig};
use egoexo::model::ParamSet;
use egoexo::pipeline::TrainConfig;
use egoexo::teachers::{DetBox, DetectionFrame, Teachers};
use egoexo::video_data::{generate_dataset, BlobCategory, Dataset, DatasetSpec, Split};
use egoexo::Tensor;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Softmax by hand

pub fn softmax_naive(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum()
}

pub fn binary_entropy(y: f64) -> f64 {
    entropy(&[y, 1.0 - y])
}

// ---------------------------------------------------------------------------
// Interaction-map rasterization oracle

pub const RASTER: i64 = 256;

/// Renders every box onto a 256x256 pixel canvas per frame, then assigns
/// each covered pixel to the grid cell holding its center and keeps the
/// highest score per cell. Box edges must lie on the pixel lattice.
pub fn raster_interaction_map(
    detections: &[DetectionFrame],
    [t, h, w]: [usize; 3],
    frames: usize,
    threshold: f64,
) -> (Vec<f32>, Vec<f32>) {
    let mut hand = vec![0f32; t * h * w];
    let mut object = vec![0f32; t * h * w];
    let px = |v: f64| (v * RASTER as f64).round() as i64;
    for frame in detections {
        let tc = frame.frame_index * t / frames;
        for b in frame.boxes.iter().filter(|b| b.score >= threshold) {
            let target = match b.category {
                BlobCategory::Hand => &mut hand,
                BlobCategory::Object => &mut object,
            };
            for py in px(b.y1)..px(b.y2) {
                for pxl in px(b.x1)..px(b.x2) {
                    // Pixel center (p + 0.5) / 256 falls in cell floor((2p + 1) n / 512).
                    let i = ((2 * py + 1) * h as i64 / (2 * RASTER)) as usize;
                    let j = ((2 * pxl + 1) * w as i64 / (2 * RASTER)) as usize;
                    let cell = &mut target[(tc * h + i) * w + j];
                    *cell = cell.max(b.score as f32);
                }
            }
        }
    }
    (hand, object)
}

/// An edge `m / 256` that stays more than one pixel away from every
/// boundary `k / n` of an `n`-cell axis.
fn clear_of_cells(m: i64, n: usize) -> bool {
    let n = n as i64;
    (0..=n).all(|k| (m * n - RASTER * k).abs() > n)
}

fn lattice_interval(rng: &mut impl Rng, n: usize) -> (f64, f64) {
    loop {
        let a = rng.random_range(0..RASTER);
        let b = rng.random_range(0..=RASTER);
        let (lo, hi) = (a.min(b), a.max(b));
        let edge_ok = |m: i64| m == 0 || m == RASTER || clear_of_cells(m, n);
        if hi > lo && edge_ok(lo) && edge_ok(hi) {
            return (lo as f64 / RASTER as f64, hi as f64 / RASTER as f64);
        }
    }
}

/// Random detections with lattice-aligned boxes kept clear of cell
/// boundaries, for a random grid up to 8x8x8 and up to 32 frames.
pub fn random_detection_case(rng: &mut impl Rng) -> (Vec<DetectionFrame>, [usize; 3], usize) {
    let grid = [
        rng.random_range(1..=8),
        rng.random_range(1..=8),
        rng.random_range(1..=8),
    ];
    let frames = rng.random_range(grid[0]..=32);
    let n_boxes = rng.random_range(0..=20);
    let mut by_frame: Vec<Vec<DetBox>> = vec![Vec::new(); frames];
    for _ in 0..n_boxes {
        let (x1, x2) = lattice_interval(rng, grid[2]);
        let (y1, y2) = lattice_interval(rng, grid[1]);
        let category = if rng.random_bool(0.5) {
            BlobCategory::Hand
        } else {
            BlobCategory::Object
        };
        by_frame[rng.random_range(0..frames)].push(DetBox {
            x1,
            y1,
            x2,
            y2,
            score: rng.random_range(0.0..1.0),
            category,
        });
    }
    let dets = by_frame
        .into_iter()
        .enumerate()
        .map(|(k, boxes)| DetectionFrame {
            video_id: "v".into(),
            frame_index: k,
            boxes,
        })
        .collect();
    (dets, grid, frames)
}

// ---------------------------------------------------------------------------
// Average precision by exhaustive pairwise ranking

fn ratio(n: usize, d: usize) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// AP with ranks counted pairwise: item `j` is ahead of `i` if it scores
/// higher or ties with a lower index.
pub fn brute_force_ap(scores: &[f64], positives: &[bool]) -> Option<BigRational> {
    let n = scores.len();
    let ahead = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let n_pos = positives.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut sum = BigRational::from_integer(0.into());
    for i in (0..n).filter(|&i| positives[i]) {
        let rank = 1 + (0..n).filter(|&j| ahead(j, i)).count();
        let hits = 1 + (0..n).filter(|&j| positives[j] && ahead(j, i)).count();
        sum += ratio(hits, rank);
    }
    Some(sum / BigRational::from_integer(n_pos.into()))
}

pub fn brute_force_map(scores: &[Vec<f64>], sets: &[Vec<bool>]) -> Option<BigRational> {
    let classes = scores[0].len();
    let aps: Vec<BigRational> = (0..classes)
        .filter_map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let y: Vec<bool> = sets.iter().map(|r| r[c]).collect();
            brute_force_ap(&s, &y)
        })
        .collect();
    if aps.is_empty() {
        return None;
    }
    let n = aps.len();
    Some(aps.into_iter().sum::<BigRational>() / BigRational::from_integer(n.into()))
}

/// Scores drawn from a handful of levels so ties are common.
pub fn random_map_case(rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let items = rng.random_range(1..=12);
    let classes = rng.random_range(1..=5);
    let levels = rng.random_range(2..=6);
    let scores = (0..items)
        .map(|_| {
            (0..classes)
                .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
                .collect()
        })
        .collect();
    let mut sets: Vec<Vec<bool>> = (0..items)
        .map(|_| (0..classes).map(|_| rng.random_bool(0.4)).collect())
        .collect();
    let c = rng.random_range(0..classes);
    sets[rng.random_range(0..items)][c] = true;
    (scores, sets)
}

// ---------------------------------------------------------------------------
// Finite differences

/// `|a - n| / max(|a|, |n|)`, with a floor for gradients that are zero in
/// both.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

pub const FD_STEP: f64 = 1e-4;

/// Five-point central difference, fourth order in the step. `None` when
/// it disagrees with the three-point estimate, which happens when a ReLU
/// kink falls inside the stencil.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> Option<f64> {
    let h = FD_STEP;
    let (p1, m1, p2, m2) = (f(x + h), f(x - h), f(x + 2.0 * h), f(x - 2.0 * h));
    let three = (p1 - m1) / (2.0 * h);
    let five = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    ((five - three).abs() <= 1e-8 + 1e-6 * five.abs()).then_some(five)
}

/// Checks `grads` against central differences of `f` on `probes` randomly
/// drawn (with replacement) scalars of the parameters whose name passes
/// `select`, redrawing probes that straddle a kink. Returns the largest
/// relative error.
pub fn check_param_grads<M: ParamSet<f64> + Clone>(
    model: &M,
    grads: &M,
    f: impl Fn(&M) -> f64,
    select: impl Fn(&str) -> bool,
    probes: usize,
    rng: &mut impl Rng,
) -> f64 {
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    let sizes: Vec<usize> = model.params().iter().map(|(_, t)| t.len()).collect();
    let candidates: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| select(n))
        .flat_map(|(ti, _)| (0..sizes[ti]).map(move |k| (ti, k)))
        .collect();
    assert!(!candidates.is_empty(), "no parameters selected");
    let grad_vals: Vec<&Tensor<f64>> = grads.params().into_iter().map(|(_, t)| t).collect();
    let mut worst = 0f64;
    let mut done = 0;
    for _ in 0..50 * probes {
        let (ti, k) = candidates[rng.random_range(0..candidates.len())];
        let x0 = model.params()[ti].1.as_slice()[k];
        let numeric = central_difference(
            |x| {
                let mut m = model.clone();
                m.params_mut()[ti].as_mut_slice()[k] = x;
                f(&m)
            },
            x0,
        );
        if let Some(numeric) = numeric {
            worst = worst.max(rel_err(grad_vals[ti].as_slice()[k], numeric));
            done += 1;
            if done == probes {
                return worst;
            }
        }
    }
    panic!("only {done} of {probes} probes were away from kinks");
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

// ---------------------------------------------------------------------------
// Small end-to-end fixtures

pub fn tiny_spec() -> DatasetSpec {
    DatasetSpec {
        n_pretrain: 8,
        n_finetune_train: 6,
        n_finetune_val: 4,
        ..DatasetSpec::default()
    }
}

/// Two narrow blocks, batch 2: four steps per epoch on `tiny_spec`.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 2,
        channels: vec![4, 4],
        strides: vec![[1, 2, 2], [2, 2, 2]],
        map_hidden: 4,
        ..TrainConfig::default()
    }
}

pub const GRID: [usize; 3] = [8, 8, 8];

pub fn tiny_fixture(seed: u64) -> (Dataset, PseudoLabelSet) {
    let spec = tiny_spec();
    let dataset = generate_dataset(&spec, seed).unwrap();
    let videos: Vec<_> = dataset.videos.iter().collect();
    let (labels, _) = build_pseudolabels(
        &videos,
        &Teachers::stubs(&spec),
        &ScoreConfig::default(),
        GRID,
        seed,
    )
    .unwrap();
    (dataset, labels)
}

pub fn split_count(d: &Dataset, s: Split) -> usize {
    d.split(s).len()
}
