use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{IntLossForm, LossWeights, TaskFlags};
use crate::model::ModelConfig;
use crate::video_data::ClipSampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// Per-step half-cosine decay from `base_lr` to 0.
    #[default]
    Cosine,
    /// Multiply by `lr_gamma` at each epoch listed in `lr_steps`.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

/// Training hyperparameters, read from flat JSON. Unknown keys are
/// rejected; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    /// Epoch milestones for the step schedule.
    pub lr_steps: Vec<usize>,
    pub lr_gamma: f64,
    pub seed: u64,
    pub w_ego: f64,
    pub w_obj: f64,
    pub w_int: f64,
    pub enable_ego: bool,
    pub enable_obj: bool,
    pub enable_int: bool,
    /// Include the hand map in the interaction loss.
    pub use_hand_map: bool,
    /// Include the object map in the interaction loss.
    pub use_object_map: bool,
    /// Keep the interaction loss on during fine-tuning.
    pub aux_in_finetune: bool,
    pub int_loss: IntLossForm,
    pub clip_length: usize,
    pub clip_stride: usize,
    pub clip_sampling: ClipSampling,
    /// Backbone block widths.
    pub channels: Vec<usize>,
    /// Backbone block `(t, h, w)` strides.
    pub strides: Vec<[usize; 3]>,
    pub kernel: [usize; 3],
    pub map_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = ModelConfig::default();
        TrainConfig {
            epochs: 12,
            batch_size: 8,
            base_lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_schedule: LrSchedule::Cosine,
            lr_steps: Vec::new(),
            lr_gamma: 0.1,
            seed: 0,
            w_ego: LossWeights::default().w_ego,
            w_obj: LossWeights::default().w_obj,
            w_int: LossWeights::default().w_int,
            enable_ego: true,
            enable_obj: true,
            enable_int: true,
            use_hand_map: true,
            use_object_map: true,
            aux_in_finetune: false,
            int_loss: IntLossForm::Bce,
            clip_length: 8,
            clip_stride: 1,
            clip_sampling: ClipSampling::Random,
            channels: arch.channels,
            strides: arch.strides,
            kernel: arch.kernel,
            map_hidden: arch.map_hidden,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum)
            || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite())
        {
            return bad("momentum must be in [0, 1) and weight_decay nonnegative");
        }
        if self.clip_length == 0 || self.clip_stride == 0 {
            return bad("clip_length and clip_stride must be positive");
        }
        match self.lr_schedule {
            LrSchedule::Cosine if !self.lr_steps.is_empty() => {
                return bad("lr_steps given with the cosine schedule");
            }
            LrSchedule::Step => {
                if !self.lr_steps.windows(2).all(|w| w[0] < w[1]) {
                    return bad("lr_steps must be strictly increasing");
                }
                if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
                    return bad("lr_gamma must be in (0, 1]");
                }
            }
            LrSchedule::Cosine => {}
        }
        self.weights().validate()?;
        self.model_config(1, 2, 2).validate()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            w_ego: self.w_ego,
            w_obj: self.w_obj,
            w_int: self.w_int,
        }
    }

    /// Tasks contributing in `phase`. Fine-tuning drops the Ego- and
    /// Object-Score losses and keeps the interaction loss only with
    /// `aux_in_finetune`.
    pub fn task_flags(&self, phase: Phase) -> TaskFlags {
        let maps = (self.use_hand_map, self.use_object_map);
        match phase {
            Phase::Pretrain => TaskFlags {
                ego: self.enable_ego,
                obj: self.enable_obj,
                int: self.enable_int,
                hand_map: maps.0,
                object_map: maps.1,
            },
            Phase::Finetune => TaskFlags {
                ego: false,
                obj: false,
                int: self.aux_in_finetune,
                hand_map: maps.0,
                object_map: maps.1,
            },
        }
    }

    pub fn model_config(
        &self,
        in_channels: usize,
        num_classes: usize,
        num_object_classes: usize,
    ) -> ModelConfig {
        ModelConfig {
            in_channels,
            channels: self.channels.clone(),
            strides: self.strides.clone(),
            kernel: self.kernel,
            map_hidden: self.map_hidden,
            num_classes,
            num_object_classes,
        }
    }

    /// Learning rate at `step` (0-based within the epoch) of `epoch`.
    pub fn lr_at(&self, epoch: usize, step: usize, steps_per_epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Cosine => {
                let total = (self.epochs * steps_per_epoch).max(1) as f64;
                let s = (epoch * steps_per_epoch + step) as f64;
                0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * s / total).cos())
            }
            LrSchedule::Step => {
                let passed = self.lr_steps.iter().filter(|&&m| m <= epoch).count();
                self.base_lr * self.lr_gamma.powi(passed as i32)
            }
        }
    }
}
