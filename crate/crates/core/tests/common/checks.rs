//! Whole-criterion checks. Each returns a one-line summary on success and
//! the first violation on failure.

// `ensure!(a < b)` must fail on NaN, so negated comparisons are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::Path;

use egoexo::labelgen::{ego_score, interaction_map, object_score, read_labels, write_labels};
use egoexo::losses::{
    binary_entropy_mean, loss_act, loss_act_grad, loss_ego, loss_int_grad, loss_obj,
    soft_cross_entropy, soft_cross_entropy_grad, IntLossForm, MapTerm,
};
use egoexo::metrics::{mean_average_precision, mean_average_precision_exact};
use egoexo::model::{Backbone, Encoder, HeadGrads, HeadMask, HeadSet, Model, ParamSet};
use egoexo::pipeline::{
    clip_objective, Checkpoint, ClipTargets, Objective, Phase, TrainConfig, TrainData, Trainer,
};
use egoexo::scalar::log_softmax;
use egoexo::video_data::{read_dataset, write_dataset, Dataset, Split};
use egoexo::{Checkpoint32, Error};
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------------------
// Ego- and Object-Score

pub fn score_examples() -> Check {
    let e = ego_score(&[[1.0, 0.0], [3.0, 2.0]], 1.0).map_err(|e| e.to_string())?;
    let want = softmax_naive(&[2.0, 1.0]);
    ensure!(
        close(e.probs[0], want[0], 1e-9) && close(e.probs[1], want[1], 1e-9),
        "ego_score {:?} vs {want:?}",
        e.probs
    );
    ensure!(close(e.probs[0], 0.73106, 1e-5), "ego_score {:?}", e.probs);

    let e = ego_score(&[[0.0, 0.0]], 1.0).unwrap();
    ensure!(
        e.probs == [0.5, 0.5],
        "symmetric ego logits gave {:?}",
        e.probs
    );

    let o = object_score(&[vec![4.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]], 1.0).unwrap();
    let want = softmax_naive(&[2.5, 0.5, 0.5]);
    for (a, b) in o.probs.iter().zip(&want) {
        ensure!(
            close(*a, *b, 1e-9),
            "object_score {:?} vs {want:?}",
            o.probs
        );
    }
    let o = object_score(&[vec![2.0, 0.0], vec![0.0, 2.0]], 1.0).unwrap();
    ensure!(
        close(o.probs[0], 0.5, 1e-12),
        "balanced frames gave {:?}",
        o.probs
    );
    Ok("worked examples within 1e-9".into())
}

fn random_rows(rng: &mut impl Rng, rows: usize, classes: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..classes)
                .map(|_| rng.random_range(-30.0..30.0))
                .collect()
        })
        .collect()
}

/// Normalization, shift invariance and permutation equivariance of both
/// scores, `cases` random inputs per property.
pub fn score_properties(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let score = |rows: &[Vec<f64>], beta: f64| -> Vec<f64> {
        if rows[0].len() == 2 && rows.len().is_multiple_of(2) {
            let pairs: Vec<[f64; 2]> = rows.iter().map(|r| [r[0], r[1]]).collect();
            ego_score(&pairs, beta).unwrap().probs.to_vec()
        } else {
            object_score(rows, beta).unwrap().probs
        }
    };
    for case in 0..cases {
        let classes = if case % 2 == 0 {
            2
        } else {
            rng.random_range(2..12)
        };
        let n = rng.random_range(1..6) * 2;
        let rows = random_rows(&mut rng, n, classes);
        let beta = rng.random_range(0.2..5.0);
        let p = score(&rows, beta);

        let sum: f64 = p.iter().sum();
        ensure!(
            (sum - 1.0).abs() <= 1e-6 && p.iter().all(|&v| v >= 0.0),
            "case {case}: probabilities {p:?} sum to {sum}"
        );

        let mut shifted = rows.clone();
        let r = rng.random_range(0..n);
        let c = rng.random_range(-50.0..50.0);
        shifted[r].iter_mut().for_each(|v| *v += c);
        let q = score(&shifted, beta);
        for (a, b) in p.iter().zip(&q) {
            ensure!(
                close(*a, *b, 1e-9),
                "case {case}: shift by {c} moved {p:?} to {q:?}"
            );
        }

        let mut perm: Vec<usize> = (0..classes).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| perm.iter().map(|&k| row[k]).collect())
            .collect();
        let q = score(&permuted, beta);
        for (i, &k) in perm.iter().enumerate() {
            ensure!(
                close(q[i], p[k], 1e-12),
                "case {case}: permutation {perm:?} broke equivariance"
            );
        }
    }
    Ok(format!(
        "{cases} cases each for normalization, shift, permutation"
    ))
}

// ---------------------------------------------------------------------------
// Interaction map

pub fn interaction_oracle(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut boxes = 0;
    for case in 0..cases {
        let (dets, grid, frames) = random_detection_case(&mut rng);
        boxes += dets.iter().map(|d| d.boxes.len()).sum::<usize>();
        let got = interaction_map(&dets, grid, frames, 0.5).map_err(|e| e.to_string())?;
        let (hand, object) = raster_interaction_map(&dets, grid, frames, 0.5);
        ensure!(
            got.hand_map == hand && got.object_map == object,
            "case {case}: grid {grid:?}, {frames} frames differs from raster oracle"
        );
    }
    Ok(format!(
        "{cases} configurations, {boxes} boxes, exact match"
    ))
}

// ---------------------------------------------------------------------------
// Gradients

pub const PROBES: usize = 32;
pub const GRAD_TOL: f64 = 1e-5;

fn grad_ok(what: &str, err: f64, report: &mut Vec<String>) -> Result<(), String> {
    ensure!(err < GRAD_TOL, "{what}: relative error {err:e}");
    report.push(format!("{what} {err:.1e}"));
    Ok(())
}

/// Largest relative error of `grad` against central differences of `f`
/// over the listed coordinates of `x`. Coordinates whose stencil meets a
/// kink are skipped; at least half must remain.
fn check_vector(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], idx: &[usize]) -> f64 {
    let errs: Vec<f64> = idx
        .iter()
        .filter_map(|&k| {
            let numeric = central_difference(
                |v| {
                    let mut y = x.to_vec();
                    y[k] = v;
                    f(&y)
                },
                x[k],
            )?;
            Some(rel_err(grad[k], numeric))
        })
        .collect();
    assert!(
        2 * errs.len() >= idx.len(),
        "{} of {} probes hit kinks",
        idx.len() - errs.len(),
        idx.len()
    );
    errs.into_iter().fold(0.0, f64::max)
}

fn random_probs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn tiny_model_config() -> egoexo::model::ModelConfig {
    egoexo::model::ModelConfig {
        in_channels: 3,
        channels: vec![4, 4],
        strides: vec![[1, 2, 2], [2, 2, 2]],
        kernel: [3, 3, 3],
        map_hidden: 4,
        num_classes: 6,
        num_object_classes: 5,
    }
}

pub fn loss_gradients(seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut report = Vec::new();
    let all: Vec<usize> = (0..40).collect();

    let z: Vec<f64> = (0..40).map(|_| rng.random_range(-4.0..4.0)).collect();
    let label = rng.random_range(0..40);
    let (_, g) = loss_act_grad(&z, label).unwrap();
    let err = check_vector(|v| loss_act(v, label).unwrap(), &z, &g, &all);
    grad_ok("L_act", err, &mut report)?;

    let t = random_probs(&mut rng, 40);
    let (_, g) = soft_cross_entropy_grad(&z, &t).unwrap();
    let err = check_vector(|v| loss_obj(&log_softmax(v), &t).unwrap(), &z, &g, &all);
    grad_ok("L_obj", err, &mut report)?;

    // Two logits per case; sixteen cases give 32 probes.
    let mut worst = 0f64;
    for _ in 0..16 {
        let z: Vec<f64> = (0..2).map(|_| rng.random_range(-4.0..4.0)).collect();
        let p = rng.random_range(0.0..1.0);
        let t = [p, 1.0 - p];
        let (_, g) = soft_cross_entropy_grad(&z, &t).unwrap();
        worst = worst.max(check_vector(
            |v| loss_ego(&log_softmax(v), &t).unwrap(),
            &z,
            &g,
            &[0, 1],
        ));
    }
    grad_ok("L_ego", worst, &mut report)?;

    let cells = 24;
    let targets: Vec<Vec<f32>> = (0..2)
        .map(|_| (0..cells).map(|_| rng.random_range(0.0f32..=1.0)).collect())
        .collect();
    let logits: Vec<f64> = (0..2 * cells)
        .map(|_| rng.random_range(-6.0..6.0))
        .collect();
    let idx: Vec<usize> = (0..2 * cells).collect();
    for form in [IntLossForm::Bce, IntLossForm::Literal] {
        let eval = |v: &[f64]| {
            let terms = [
                MapTerm {
                    logits: &v[..cells],
                    target: &targets[0],
                },
                MapTerm {
                    logits: &v[cells..],
                    target: &targets[1],
                },
            ];
            loss_int_grad(&terms, form).unwrap()
        };
        let (_, gs) = eval(&logits);
        let g: Vec<f64> = gs.concat();
        let err = check_vector(|v| eval(v).0, &logits, &g, &idx);
        grad_ok(&format!("L_int({form:?})"), err, &mut report)?;
    }
    Ok(report.join(", "))
}

/// Random-weighted sum of every head output, the scalar probe for head
/// gradients.
fn head_probe(
    heads: &HeadSet<f64>,
    feature: &Tensor<f64>,
    probe: &HeadGrads<f64>,
    mask: HeadMask,
) -> f64 {
    let (out, _) = heads.forward(feature, mask).unwrap();
    let dot = |a: &Option<Vec<f64>>, b: &Option<Vec<f64>>| match (a, b) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        _ => 0.0,
    };
    dot(&out.act_logits, &probe.act)
        + dot(&out.ego_logits, &probe.ego)
        + dot(&out.obj_logits, &probe.obj)
        + dot(&out.hand_logits, &probe.hand)
        + dot(&out.object_logits, &probe.object)
}

pub fn model_gradients(seed: u64) -> Check {
    let mut rng = rng(seed);
    let mc = tiny_model_config();
    let model = Model::<f64>::init(&mc, seed).unwrap();
    let mut report = Vec::new();

    let input = random_tensor(&[3, 8, 16, 16], 1.0, &mut rng);
    let (feature, cache) = model.backbone.forward(&input).unwrap();
    let cells = feature.len() / feature.shape()[0];
    let mut vec_of = |n: usize| -> Option<Vec<f64>> {
        Some((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let probe = HeadGrads {
        act: vec_of(mc.num_classes),
        ego: vec_of(2),
        obj: vec_of(mc.num_object_classes),
        hand: vec_of(cells),
        object: vec_of(cells),
    };
    let mut rng = super::rng(seed ^ 1);

    // Heads, one at a time.
    for (name, mask) in [
        ("classifier", HeadMask::ACT_ONLY),
        (
            "ego",
            HeadMask {
                act: false,
                ego: true,
                ..HeadMask::ACT_ONLY
            },
        ),
        (
            "obj",
            HeadMask {
                act: false,
                obj: true,
                ..HeadMask::ACT_ONLY
            },
        ),
        (
            "hand",
            HeadMask {
                act: false,
                hand: true,
                ..HeadMask::ACT_ONLY
            },
        ),
        (
            "object",
            HeadMask {
                act: false,
                object: true,
                ..HeadMask::ACT_ONLY
            },
        ),
    ] {
        let masked = HeadGrads {
            act: probe.act.clone().filter(|_| mask.act),
            ego: probe.ego.clone().filter(|_| mask.ego),
            obj: probe.obj.clone().filter(|_| mask.obj),
            hand: probe.hand.clone().filter(|_| mask.hand),
            object: probe.object.clone().filter(|_| mask.object),
        };
        let (_, hc) = model.heads.forward(&feature, mask).unwrap();
        let mut grads = model.heads.zeros_like();
        let g_feature = model
            .heads
            .backward(&feature, &hc, &masked, &mut grads)
            .unwrap();
        let prefix = format!("heads.{name}.");
        let err = check_param_grads(
            &model.heads,
            &grads,
            |h| head_probe(h, &feature, &masked, mask),
            |n| n.starts_with(&prefix),
            PROBES,
            &mut rng,
        );
        grad_ok(&format!("H_{name} params"), err, &mut report)?;
        let idx: Vec<usize> = (0..PROBES)
            .map(|_| rng.random_range(0..feature.len()))
            .collect();
        let err = check_vector(
            |v| {
                let f = Tensor::from_vec(feature.shape(), v.to_vec()).unwrap();
                head_probe(&model.heads, &f, &masked, mask)
            },
            feature.as_slice(),
            g_feature.as_slice(),
            &idx,
        );
        grad_ok(&format!("H_{name} input"), err, &mut report)?;
    }

    // Backbone under a random linear probe of the feature.
    let r = random_tensor(feature.shape(), 1.0, &mut rng);
    let probe_bb = |b: &Backbone<f64>, x: &Tensor<f64>| -> f64 {
        let (f, _) = b.forward(x).unwrap();
        f.as_slice()
            .iter()
            .zip(r.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    };
    let mut grads = model.backbone.zeros_like();
    let g_input = model
        .backbone
        .backward(&cache, &r, &mut grads, true)
        .unwrap()
        .unwrap();
    for layer in 0..mc.channels.len() {
        let prefix = format!("backbone.layer{layer}.");
        let err = check_param_grads(
            &model.backbone,
            &grads,
            |b| probe_bb(b, &input),
            |n| n.starts_with(&prefix),
            PROBES,
            &mut rng,
        );
        grad_ok(&format!("backbone layer{layer}"), err, &mut report)?;
    }
    let idx: Vec<usize> = (0..PROBES)
        .map(|_| rng.random_range(0..input.len()))
        .collect();
    let err = check_vector(
        |v| {
            probe_bb(
                &model.backbone,
                &Tensor::from_vec(input.shape(), v.to_vec()).unwrap(),
            )
        },
        input.as_slice(),
        g_input.as_slice(),
        &idx,
    );
    grad_ok("backbone input", err, &mut report)?;
    Ok(report.join(", "))
}

/// The full weighted objective through every head and the backbone.
pub fn objective_gradients(seed: u64) -> Check {
    let mut rng = rng(seed);
    let mc = tiny_model_config();
    let model = Model::<f64>::init(&mc, seed + 7).unwrap();
    let input = random_tensor(&[3, 8, 16, 16], 1.0, &mut rng);
    let cells = 4 * 4 * 4;
    let p = rng.random_range(0.1..0.9);
    let targets = ClipTargets {
        ego: [p, 1.0 - p],
        obj: random_probs(&mut rng, mc.num_object_classes),
        hand: (0..cells).map(|_| rng.random_range(0.0f32..=1.0)).collect(),
        object: (0..cells).map(|_| rng.random_range(0.0f32..=1.0)).collect(),
    };
    let objective = Objective {
        weights: egoexo::losses::LossWeights::default(),
        flags: egoexo::losses::TaskFlags::ALL,
        int_form: IntLossForm::Bce,
    };
    let label = 2;
    let f = |m: &Model<f64>| {
        clip_objective(m, &input, label, Some(&targets), &objective, 1.0, None)
            .unwrap()
            .l_total
    };
    let mut grads = model.zeros_like();
    clip_objective(
        &model,
        &input,
        label,
        Some(&targets),
        &objective,
        1.0,
        Some(&mut grads),
    )
    .unwrap();
    let err = check_param_grads(&model, &grads, f, |_| true, 2 * PROBES, &mut rng);
    let mut report = Vec::new();
    grad_ok("l_total, all parameters", err, &mut report)?;
    Ok(report.join(", "))
}

// ---------------------------------------------------------------------------
// Gibbs bounds

pub fn gibbs_bounds(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut max_gap_at_match = 0f64;
    for case in 0..cases {
        let classes = if case % 2 == 0 {
            2
        } else {
            rng.random_range(2..10)
        };
        let t = random_probs(&mut rng, classes);
        let z: Vec<f64> = (0..classes).map(|_| rng.random_range(-5.0..5.0)).collect();
        let h = entropy(&t);
        let l = soft_cross_entropy(&log_softmax(&z), &t).unwrap();
        ensure!(l >= h - 1e-12, "case {case}: CE {l} below entropy {h}");
        let matched: Vec<f64> = t.iter().map(|v| v.ln()).collect();
        let lm = if classes == 2 {
            loss_ego(&matched, &[t[0], t[1]]).unwrap()
        } else {
            loss_obj(&matched, &t).unwrap()
        };
        max_gap_at_match = max_gap_at_match.max((lm - h).abs());
        ensure!(
            (lm - h).abs() <= 1e-8,
            "case {case}: matched CE {lm} vs {h}"
        );

        let cells = rng.random_range(1..40);
        let y: Vec<f32> = (0..cells)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0f32..1.0),
            })
            .collect();
        let logits: Vec<f64> = (0..cells).map(|_| rng.random_range(-8.0..8.0)).collect();
        let hb: f64 = binary_entropy_mean(&[&y]);
        let term = [MapTerm {
            logits: &logits,
            target: &y,
        }];
        let (li, _) = loss_int_grad(&term, IntLossForm::Bce).unwrap();
        ensure!(li >= hb - 1e-12, "case {case}: L_int {li} below {hb}");

        // At sigma(l) = y; cells at 0 or 1 are matched by a large logit.
        let matched: Vec<f64> = y
            .iter()
            .map(|&v| {
                let v = v as f64;
                if v == 0.0 {
                    -60.0
                } else if v == 1.0 {
                    60.0
                } else {
                    (v / (1.0 - v)).ln()
                }
            })
            .collect();
        let term = [MapTerm {
            logits: &matched,
            target: &y,
        }];
        let (lm, _) = loss_int_grad(&term, IntLossForm::Bce).unwrap();
        max_gap_at_match = max_gap_at_match.max((lm - hb).abs());
        ensure!(
            (lm - hb).abs() <= 1e-8,
            "case {case}: matched L_int {lm} vs {hb}"
        );
    }
    Ok(format!(
        "{cases} cases, largest gap at matched predictions {max_gap_at_match:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// Training-loop coherence

fn run_pretrain<'a>(
    dataset: &'a Dataset,
    labels: &'a egoexo::labelgen::PseudoLabelSet,
    config: &TrainConfig,
) -> Trainer<'a, f32> {
    let data = TrainData::from_dataset(dataset, Split::Pretrain, Some(labels));
    let mut t = Trainer::pretrain(data, config).unwrap();
    t.run().unwrap();
    t
}

pub fn ablation_coherence(seed: u64) -> Check {
    let (dataset, labels) = tiny_fixture(seed);
    let base = TrainConfig {
        seed,
        ..tiny_config()
    };
    let mut steps = 0;
    for task in ["ego", "obj", "int"] {
        let mut zero = base.clone();
        let mut off = base.clone();
        match task {
            "ego" => (zero.w_ego, off.enable_ego) = (0.0, false),
            "obj" => (zero.w_obj, off.enable_obj) = (0.0, false),
            _ => (zero.w_int, off.enable_int) = (0.0, false),
        }
        let a = run_pretrain(&dataset, &labels, &zero);
        let b = run_pretrain(&dataset, &labels, &off);
        ensure!(
            a.model == b.model && a.optimizer.buffers == b.optimizer.buffers,
            "{task}: zero weight and disabled runs diverge"
        );
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            ensure!(
                sa.report.l_act.to_bits() == sb.report.l_act.to_bits()
                    && sa.report.l_total.to_bits() == sb.report.l_total.to_bits(),
                "{task}: step {} losses differ",
                sa.step
            );
        }
        steps += a.steps.len();
    }

    let full = run_pretrain(&dataset, &labels, &base);
    let w = base.weights();
    let mut worst = 0f64;
    for s in &full.steps {
        let r = &s.report;
        let rebuilt = r.l_act + w.w_ego * r.l_ego + w.w_obj * r.l_obj + w.w_int * r.l_int;
        worst = worst.max((rebuilt - r.l_total).abs());
        ensure!(
            (rebuilt - r.l_total).abs() <= 1e-6,
            "step {}: l_total {} vs components {rebuilt}",
            s.step,
            r.l_total
        );
    }
    Ok(format!(
        "{steps} steps bit-identical over {} epochs; l_total identity off by at most {worst:.1e}",
        base.epochs
    ))
}

fn files_equal(a: &Path, b: &Path) -> Result<(), String> {
    for name in [
        "manifest.json",
        "backbone.f32",
        "heads.f32",
        "optimizer.f32",
    ] {
        let x = fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(name)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{name} differs");
    }
    Ok(())
}

pub fn determinism_and_resume(seed: u64) -> Check {
    let (dataset, labels) = tiny_fixture(seed);
    let config = TrainConfig {
        seed,
        epochs: 2,
        ..tiny_config()
    };
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let a = run_pretrain(&dataset, &labels, &config);
    let b = run_pretrain(&dataset, &labels, &config);
    a.checkpoint().unwrap().save(&dir.path().join("a")).unwrap();
    b.checkpoint().unwrap().save(&dir.path().join("b")).unwrap();
    files_equal(&dir.path().join("a"), &dir.path().join("b"))?;
    ensure!(
        egoexo::pipeline::metrics_csv(&a.history) == egoexo::pipeline::metrics_csv(&b.history),
        "metrics CSVs differ"
    );

    // Stop after one epoch, reload from disk, finish.
    let data = TrainData::from_dataset(&dataset, Split::Pretrain, Some(&labels));
    let mut first = Trainer::<f32>::pretrain(data.clone(), &config).unwrap();
    first.run_epoch().unwrap();
    let mid = dir.path().join("mid");
    first.checkpoint().unwrap().save(&mid).unwrap();
    let loaded = Checkpoint32::load(&mid).unwrap();
    let mut resumed = Trainer::resume(&loaded, data, &config).unwrap();
    resumed.run().unwrap();
    let further = resumed.steps.len();
    ensure!(further >= 3, "only {further} steps after resuming");
    ensure!(
        resumed.model == a.model && resumed.optimizer.buffers == a.optimizer.buffers,
        "resumed run differs from the uninterrupted one"
    );
    for (r, u) in resumed
        .steps
        .iter()
        .zip(&a.steps[a.steps.len() - further..])
    {
        ensure!(r == u, "step {} differs after resume", r.step);
    }
    resumed
        .checkpoint()
        .unwrap()
        .save(&dir.path().join("c"))
        .unwrap();
    files_equal(&dir.path().join("a"), &dir.path().join("c"))?;
    Ok(format!(
        "bit-identical checkpoints; resume matches for {further} further steps"
    ))
}

// ---------------------------------------------------------------------------
// Metrics

pub fn metrics_oracle(cases: usize, seed: u64) -> Check {
    let ap = egoexo::metrics::average_precision_in::<num_rational::BigRational, f64>(
        &[0.9, 0.8, 0.7],
        &[false, true, true],
    )
    .unwrap()
    .unwrap();
    let seven_twelfths = num_rational::BigRational::new(7.into(), 12.into());
    ensure!(ap == seven_twelfths, "worked example gave {ap}");
    ensure!(
        brute_force_ap(&[0.9, 0.8, 0.7], &[false, true, true]) == Some(seven_twelfths),
        "oracle disagrees on the worked example"
    );

    let mut rng = rng(seed);
    for case in 0..cases {
        let (scores, sets) = random_map_case(&mut rng);
        let want = brute_force_map(&scores, &sets).expect("one positive planted");
        let (exact, _) = mean_average_precision_exact(&scores, &sets).map_err(|e| e.to_string())?;
        ensure!(exact == want, "case {case}: {exact} vs oracle {want}");
        let float = mean_average_precision(&scores, &sets).unwrap().value;
        let want_f: f64 = num_traits::ToPrimitive::to_f64(&want).unwrap();
        ensure!(
            (float - want_f).abs() <= 1e-12,
            "case {case}: f64 mAP {float} vs {want_f}"
        );
    }
    Ok(format!("7/12 reproduced; {cases} random instances exact"))
}

// ---------------------------------------------------------------------------
// Archives

fn flip_byte(path: &Path, at: usize) {
    let mut bytes = fs::read(path).unwrap();
    let k = at % bytes.len();
    bytes[k] ^= 0x40;
    fs::write(path, bytes).unwrap();
}

fn is_checksum(e: &Error) -> bool {
    matches!(e.root(), Error::Checksum { .. })
}

pub fn archive_round_trips(seed: u64) -> Check {
    let (dataset, labels) = tiny_fixture(seed);
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let root = dir.path();

    write_labels(&labels, &root.join("labels")).unwrap();
    ensure!(
        read_labels(&root.join("labels")).unwrap() == labels,
        "label archive round trip"
    );
    let id = labels.entries.keys().next().unwrap().clone();
    flip_byte(&root.join(format!("labels/labels/{id}.hand_map.f32")), 17);
    let e = read_labels(&root.join("labels")).unwrap_err();
    ensure!(is_checksum(&e), "corrupt labels gave {e}");

    write_dataset(&dataset, &root.join("data")).unwrap();
    ensure!(
        read_dataset(&root.join("data")).unwrap() == dataset,
        "dataset round trip"
    );
    let vid = &dataset.videos[0].video_id;
    flip_byte(&root.join(format!("data/tensors/{vid}.f32")), 1234);
    let e = read_dataset(&root.join("data")).unwrap_err();
    ensure!(is_checksum(&e), "corrupt dataset gave {e}");

    let mut config = tiny_config();
    config.epochs = 1;
    let trained = run_pretrain(&dataset, &labels, &config)
        .checkpoint()
        .unwrap();
    trained.save(&root.join("ckpt")).unwrap();
    let back: Checkpoint<f32> = Checkpoint::load(&root.join("ckpt")).unwrap();
    ensure!(back == trained, "checkpoint round trip");
    ensure!(back.phase == Phase::Pretrain, "phase lost");
    for file in ["backbone.f32", "heads.f32", "optimizer.f32"] {
        let copy = root.join(format!("ckpt_{file}"));
        fs::create_dir_all(&copy).unwrap();
        for f in fs::read_dir(root.join("ckpt")).unwrap() {
            let f = f.unwrap().path();
            fs::copy(&f, copy.join(f.file_name().unwrap())).unwrap();
        }
        flip_byte(&copy.join(file), 5);
        let e = Checkpoint32::load(&copy).unwrap_err();
        ensure!(is_checksum(&e), "corrupt {file} gave {e}");
    }
    Ok("labels, dataset and checkpoint bit-exact; single-byte flips rejected".into())
}
