//! Pre-training, fine-tuning, checkpointing and multi-clip inference.

mod checkpoint;
mod config;
mod optim;
mod predict;
mod train;

pub use checkpoint::{
    fingerprint, load_backbone, read_checkpoint_manifest, Checkpoint, CheckpointManifest,
    TensorGroup, TensorSpec, CHECKPOINT_MANIFEST,
};
pub use config::{LrSchedule, Phase, TrainConfig};
pub use optim::Sgd;
pub use predict::{
    aggregate, clip_probabilities, evaluate, model_input, predict_video, Aggregation, EvalMetric,
    INPUT_SCALE,
};
pub use train::{
    clip_objective, clip_targets, finetune, metrics_csv, pretrain, ClipTargets, EpochRow,
    Objective, StepRecord, TrainData, TrainOutcome, Trainer, METRICS_HEADER,
};
