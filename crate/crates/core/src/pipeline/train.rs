use rand::seq::SliceRandom;

use super::checkpoint::{fingerprint, Checkpoint};
use super::config::{Phase, TrainConfig};
use super::optim::Sgd;
use super::predict::model_input;
use crate::error::{Error, Result};
use crate::labelgen::{temporal_cell, PseudoLabelSet, VideoLabels};
use crate::losses::{
    loss_act_grad, loss_int_grad, loss_total, soft_cross_entropy_grad, IntLossForm, LossComponents,
    LossReport, LossWeights, MapTerm, TaskFlags,
};
use crate::model::{Encoder, HeadGrads, HeadMask, Model, ModelConfig, ParamSet};
use crate::scalar::Scalar;
use crate::seed;
use crate::tensor::Tensor;
use crate::video_data::{clip_starts, extract_clip, Dataset, Split, VideoRecord};

/// Videos to train on plus their label spaces.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub videos: Vec<&'a VideoRecord>,
    pub in_channels: usize,
    /// Size of the classifier output.
    pub num_classes: usize,
    pub num_object_classes: usize,
    pub labels: Option<&'a PseudoLabelSet>,
}

impl<'a> TrainData<'a> {
    pub fn from_dataset(
        dataset: &'a Dataset,
        split: Split,
        labels: Option<&'a PseudoLabelSet>,
    ) -> Self {
        let spec = &dataset.spec;
        TrainData {
            videos: dataset.split(split),
            in_channels: spec.channels,
            num_classes: spec.num_labels(split),
            num_object_classes: spec.num_object_classes,
            labels,
        }
    }
}

/// Targets for one training clip, with the interaction maps already sliced
/// to the clip's feature cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTargets<T> {
    pub ego: [T; 2],
    pub obj: Vec<T>,
    pub hand: Vec<f32>,
    pub object: Vec<f32>,
}

/// Builds clip targets from video-level labels. Feature cell `j` of a clip
/// starting at `start` covers source frame `start + (j * L / t) * stride`,
/// which is mapped to its video-level temporal cell.
pub fn clip_targets<T: Scalar>(
    labels: &VideoLabels,
    start: usize,
    clip_length: usize,
    stride: usize,
    frames: usize,
    feature_thw: [usize; 3],
) -> Result<ClipTargets<T>> {
    let [tg, hg, wg] = labels.interaction.grid_shape;
    let [tf, hf, wf] = feature_thw;
    if [hg, wg] != [hf, wf] {
        return Err(Error::Incompatible(format!(
            "label grid {:?} does not match feature grid {:?}",
            labels.interaction.grid_shape, feature_thw
        )));
    }
    let cells: Vec<usize> = (0..tf)
        .map(|j| temporal_cell(start + (j * clip_length / tf) * stride, tg, frames))
        .collect();
    let sliced = labels.interaction.select_time(&cells);
    Ok(ClipTargets {
        ego: [
            T::of_f32(labels.ego.probs[0]),
            T::of_f32(labels.ego.probs[1]),
        ],
        obj: labels.object.probs.iter().map(|&p| T::of_f32(p)).collect(),
        hand: sliced.hand_map,
        object: sliced.object_map,
    })
}

/// How the per-clip losses are combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    pub flags: TaskFlags,
    pub int_form: IntLossForm,
}

impl Objective {
    /// A task sends gradient only when enabled with positive weight.
    fn contributes(&self) -> [bool; 4] {
        let w = &self.weights;
        let f = &self.flags;
        [
            f.ego && w.w_ego > 0.0,
            f.obj && w.w_obj > 0.0,
            f.int_hand() && w.w_int > 0.0,
            f.int_object() && w.w_int > 0.0,
        ]
    }

    /// Which parameter tensors receive updates, by name.
    pub fn trainable(&self, names: &[String]) -> Vec<bool> {
        let [ego, obj, hand, object] = self.contributes();
        names
            .iter()
            .map(|n| match n.split('.').nth(1) {
                _ if n.starts_with("backbone.") => true,
                Some("classifier") => true,
                Some("ego") => ego,
                Some("obj") => obj,
                Some("hand") => hand,
                Some("object") => object,
                _ => false,
            })
            .collect()
    }
}

fn scaled<T: Scalar>(mut g: Vec<T>, k: T) -> Vec<T> {
    g.iter_mut().for_each(|v| *v *= k);
    g
}

/// Forward pass and losses for one clip. When `grads` is given, adds
/// `scale` times the gradient of `l_total` to it.
pub fn clip_objective<T: Scalar, E: Encoder<T>>(
    model: &Model<T, E>,
    input: &Tensor<T>,
    label: usize,
    targets: Option<&ClipTargets<T>>,
    objective: &Objective,
    scale: T,
    grads: Option<&mut Model<T, E>>,
) -> Result<LossReport<T>> {
    let flags = objective.flags;
    let w = objective.weights;
    if flags.any_aux() && targets.is_none() {
        return Err(Error::MissingLabels(
            "clip targets for enabled auxiliary tasks".into(),
        ));
    }
    let (feature, bcache) = model.backbone.forward(input)?;
    let mask = HeadMask {
        act: true,
        ego: flags.ego,
        obj: flags.obj,
        hand: flags.int_hand(),
        object: flags.int_object(),
    };
    let (out, hcache) = model.heads.forward(&feature, mask)?;

    let (l_act, g_act) = loss_act_grad(out.act_logits.as_deref().expect("act head"), label)?;
    let mut components = LossComponents {
        l_act,
        l_ego: None,
        l_obj: None,
        l_int: None,
    };
    let mut hg = HeadGrads {
        act: Some(scaled(g_act, scale)),
        ..Default::default()
    };
    let [c_ego, c_obj, c_hand, c_object] = objective.contributes();

    if let (Some(z), Some(t)) = (out.ego_logits.as_deref(), targets) {
        let (l, g) = soft_cross_entropy_grad(z, &t.ego)?;
        components.l_ego = Some(l);
        hg.ego = c_ego.then(|| scaled(g, scale * T::lit(w.w_ego)));
    }
    if let (Some(z), Some(t)) = (out.obj_logits.as_deref(), targets) {
        let (l, g) = soft_cross_entropy_grad(z, &t.obj)?;
        components.l_obj = Some(l);
        hg.obj = c_obj.then(|| scaled(g, scale * T::lit(w.w_obj)));
    }
    if let Some(t) = targets.filter(|_| flags.int_hand() || flags.int_object()) {
        let mut terms = Vec::with_capacity(2);
        if let Some(z) = out.hand_logits.as_deref() {
            terms.push(MapTerm {
                logits: z,
                target: &t.hand,
            });
        }
        if let Some(z) = out.object_logits.as_deref() {
            terms.push(MapTerm {
                logits: z,
                target: &t.object,
            });
        }
        let (l, map_grads) = loss_int_grad(&terms, objective.int_form)?;
        components.l_int = Some(l);
        let k = scale * T::lit(w.w_int);
        let mut it = map_grads.into_iter();
        if flags.int_hand() {
            hg.hand = it.next().filter(|_| c_hand).map(|g| scaled(g, k));
        }
        if flags.int_object() {
            hg.object = it.next().filter(|_| c_object).map(|g| scaled(g, k));
        }
    }
    let report = loss_total(&components, &w, &flags);

    if let Some(grads) = grads {
        let g_feature = model
            .heads
            .backward(&feature, &hcache, &hg, &mut grads.heads)?;
        model
            .backbone
            .backward(&bcache, &g_feature, &mut grads.backbone, false)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    /// Mean over the batch.
    pub report: LossReport<f64>,
}

/// One metrics-CSV row: step reports averaged over an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub report: LossReport<f64>,
    /// Learning rate at the epoch's first step.
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "epoch,l_act,l_ego,l_obj,l_int,l_total,lr";

pub fn metrics_csv(rows: &[EpochRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let p = &r.report;
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, p.l_act, p.l_ego, p.l_obj, p.l_int, p.l_total, r.lr
        ));
    }
    s
}

fn to_f64<T: Scalar>(r: &LossReport<T>) -> LossReport<f64> {
    LossReport {
        l_act: r.l_act.to_f64_lossy(),
        l_ego: r.l_ego.to_f64_lossy(),
        l_obj: r.l_obj.to_f64_lossy(),
        l_int: r.l_int.to_f64_lossy(),
        l_total: r.l_total.to_f64_lossy(),
    }
}

fn accumulate(acc: &mut LossReport<f64>, r: &LossReport<f64>, k: f64) {
    acc.l_act += k * r.l_act;
    acc.l_ego += k * r.l_ego;
    acc.l_obj += k * r.l_obj;
    acc.l_int += k * r.l_int;
    acc.l_total += k * r.l_total;
}

/// SGD training loop shared by pre-training and fine-tuning.
///
/// Each epoch visits every video once in a seeded shuffled order, cutting
/// one clip per visit. The batch loss is the mean of the clip losses.
/// Shuffles and clip offsets are keyed by `(seed, epoch)`, so a run resumed
/// from an epoch-boundary checkpoint follows the uninterrupted trajectory.
pub struct Trainer<'a, T> {
    pub config: TrainConfig,
    pub phase: Phase,
    pub model_config: ModelConfig,
    pub model: Model<T>,
    pub optimizer: Sgd<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: usize,
    pub history: Vec<EpochRow>,
    pub steps: Vec<StepRecord>,
    data: TrainData<'a>,
    objective: Objective,
    trainable: Vec<bool>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    fn assemble(
        config: &TrainConfig,
        phase: Phase,
        model_config: ModelConfig,
        model: Model<T>,
        data: TrainData<'a>,
    ) -> Result<Self> {
        config.validate()?;
        let objective = Objective {
            weights: config.weights(),
            flags: config.task_flags(phase),
            int_form: config.int_loss,
        };
        if objective.flags.any_aux() {
            let labels = data
                .labels
                .ok_or_else(|| Error::MissingLabels("auxiliary tasks need a label set".into()))?;
            labels.check_covers(data.videos.iter().copied())?;
            if objective.flags.obj && labels.num_object_classes != model_config.num_object_classes {
                return Err(Error::Incompatible(format!(
                    "labels have {} object classes, model {}",
                    labels.num_object_classes, model_config.num_object_classes
                )));
            }
        }
        if let Some(v) = data
            .videos
            .iter()
            .find(|v| v.action_label >= data.num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "video {} has label {} outside {} classes",
                v.video_id, v.action_label, data.num_classes
            )));
        }
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        let shapes: Vec<Vec<usize>> = model
            .params()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        Ok(Trainer {
            config: config.clone(),
            phase,
            trainable: objective.trainable(&names),
            optimizer: Sgd::new(config.momentum, config.weight_decay, &shape_refs),
            model_config,
            model,
            epoch: 0,
            global_step: 0,
            history: Vec::new(),
            steps: Vec::new(),
            data,
            objective,
        })
    }

    fn model_config_for(config: &TrainConfig, data: &TrainData<'_>) -> ModelConfig {
        config.model_config(data.in_channels, data.num_classes, data.num_object_classes)
    }

    /// Pre-training from a seeded initialization.
    pub fn pretrain(data: TrainData<'a>, config: &TrainConfig) -> Result<Self> {
        let mc = Self::model_config_for(config, &data);
        let model = Model::init(&mc, config.seed)?;
        Self::assemble(config, Phase::Pretrain, mc, model, data)
    }

    /// Fine-tuning from a pre-trained checkpoint: backbone and map heads
    /// are kept, the classifier is replaced and the optimizer state reset.
    pub fn finetune(
        init: &Checkpoint<T>,
        data: TrainData<'a>,
        config: &TrainConfig,
    ) -> Result<Self> {
        let mut mc = Self::model_config_for(config, &data);
        let old = &init.model_config;
        let same_arch = old.in_channels == mc.in_channels
            && old.channels == mc.channels
            && old.strides == mc.strides
            && old.kernel == mc.kernel
            && old.map_hidden == mc.map_hidden;
        if !same_arch {
            return Err(Error::Incompatible(format!(
                "checkpoint backbone {:?}/{:?}/{:?} differs from config {:?}/{:?}/{:?}",
                old.channels, old.strides, old.kernel, mc.channels, mc.strides, mc.kernel
            )));
        }
        mc.num_object_classes = old.num_object_classes;
        let mut model = init.model.clone();
        model.heads.reset_classifier(data.num_classes, config.seed);
        Self::assemble(config, Phase::Finetune, mc, model, data)
    }

    /// Fine-tuning from a seeded initialization; the classifier is drawn
    /// exactly as in [`Trainer::finetune`].
    pub fn finetune_scratch(data: TrainData<'a>, config: &TrainConfig) -> Result<Self> {
        let mc = Self::model_config_for(config, &data);
        let mut model = Model::init(&mc, config.seed)?;
        model.heads.reset_classifier(data.num_classes, config.seed);
        Self::assemble(config, Phase::Finetune, mc, model, data)
    }

    /// Continues the run saved in `ckpt`. The configuration must match the
    /// one it was written with.
    pub fn resume(ckpt: &Checkpoint<T>, data: TrainData<'a>, config: &TrainConfig) -> Result<Self> {
        let fp = fingerprint(ckpt.phase, &ckpt.model_config, config)?;
        if fp != ckpt.fingerprint {
            return Err(Error::Incompatible(
                "configuration differs from the checkpoint's".into(),
            ));
        }
        let mut t = Self::assemble(
            config,
            ckpt.phase,
            ckpt.model_config.clone(),
            ckpt.model.clone(),
            data,
        )?;
        if ckpt.momentum.len() != t.optimizer.buffers.len() {
            return Err(Error::Incompatible(
                "optimizer state does not match the model".into(),
            ));
        }
        t.optimizer.buffers = ckpt.momentum.clone();
        t.epoch = ckpt.epoch;
        t.global_step = ckpt.global_step;
        Ok(t)
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.videos.len().div_ceil(self.config.batch_size)
    }

    fn clip_start(&self, video: &VideoRecord, epoch: usize) -> Result<usize> {
        let key = seed::derive(
            self.config.seed,
            &[
                seed::TAG_CLIPS,
                epoch as u64,
                seed::hash_str(&video.video_id),
            ],
        );
        let c = &self.config;
        Ok(clip_starts(
            video.num_frames(),
            1,
            c.clip_length,
            c.clip_stride,
            c.clip_sampling,
            key,
        )?[0])
    }

    /// Trains one epoch and returns its averaged row.
    pub fn run_epoch(&mut self) -> Result<EpochRow> {
        let epoch = self.epoch;
        let n = self.data.videos.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(
            self.config.seed,
            &[seed::TAG_SHUFFLE, epoch as u64],
        ));
        let steps_per_epoch = self.steps_per_epoch();
        let mut row = EpochRow {
            epoch,
            report: LossReport::default(),
            lr: self.config.lr_at(epoch, 0, steps_per_epoch),
        };
        for (step, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let lr = self.config.lr_at(epoch, step, steps_per_epoch);
            let mut grads = self.model.zeros_like();
            let inv = 1.0 / chunk.len() as f64;
            let mut mean = LossReport::default();
            for &vi in chunk {
                let video = self.data.videos[vi];
                let report = self.clip_step(video, epoch, T::lit(inv), &mut grads)?;
                if !report.all_finite() {
                    return Err(Error::NumericFailure {
                        epoch,
                        step: self.global_step,
                        detail: format!("non-finite loss on {}: {report:?}", video.video_id),
                    });
                }
                accumulate(&mut mean, &to_f64(&report), inv);
            }
            let grad_refs: Vec<&Tensor<T>> = grads.params().into_iter().map(|(_, t)| t).collect();
            self.optimizer
                .step(self.model.params_mut(), &grad_refs, &self.trainable, lr)?;
            self.global_step += 1;
            self.steps.push(StepRecord {
                epoch,
                step,
                lr,
                report: mean,
            });
            accumulate(&mut row.report, &mean, 1.0 / steps_per_epoch as f64);
        }
        self.epoch += 1;
        self.history.push(row);
        Ok(row)
    }

    fn clip_step(
        &self,
        video: &VideoRecord,
        epoch: usize,
        scale: T,
        grads: &mut Model<T>,
    ) -> Result<LossReport<T>> {
        let c = &self.config;
        let start = self.clip_start(video, epoch)?;
        let input = model_input::<T>(&extract_clip(video, start, c.clip_length, c.clip_stride)?);
        let targets = if self.objective.flags.any_aux() {
            let labels = self
                .data
                .labels
                .expect("checked at construction")
                .get(&video.video_id)?;
            let s = input.shape();
            let [_, t, h, w] = self
                .model
                .backbone
                .feature_shape([s[0], s[1], s[2], s[3]])?;
            Some(clip_targets(
                labels,
                start,
                c.clip_length,
                c.clip_stride,
                video.num_frames(),
                [t, h, w],
            )?)
        } else {
            None
        };
        clip_objective(
            &self.model,
            &input,
            video.action_label,
            targets.as_ref(),
            &self.objective,
            scale,
            Some(grads),
        )
        .map_err(|e| Error::in_video(&video.video_id, e))
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint<T>> {
        Ok(Checkpoint {
            phase: self.phase,
            model_config: self.model_config.clone(),
            train_config: self.config.clone(),
            fingerprint: fingerprint(self.phase, &self.model_config, &self.config)?,
            model: self.model.clone(),
            momentum: self.optimizer.buffers.clone(),
            epoch: self.epoch,
            global_step: self.global_step,
        })
    }
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub history: Vec<EpochRow>,
    pub steps: Vec<StepRecord>,
}

fn finish<T: Scalar>(mut t: Trainer<'_, T>) -> Result<TrainOutcome<T>> {
    t.run()?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint()?,
        history: t.history,
        steps: t.steps,
    })
}

/// Pre-trains on the pretrain split of `dataset`.
pub fn pretrain<T: Scalar>(
    dataset: &Dataset,
    labels: Option<&PseudoLabelSet>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    finish(Trainer::pretrain(
        TrainData::from_dataset(dataset, Split::Pretrain, labels),
        config,
    )?)
}

/// Fine-tunes on the fine-tune training split, from `init` or, when
/// `None`, from scratch.
pub fn finetune<T: Scalar>(
    init: Option<&Checkpoint<T>>,
    dataset: &Dataset,
    labels: Option<&PseudoLabelSet>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let data = TrainData::from_dataset(dataset, Split::FinetuneTrain, labels);
    finish(match init {
        Some(ckpt) => Trainer::finetune(ckpt, data, config)?,
        None => Trainer::finetune_scratch(data, config)?,
    })
}
