use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Phase, TrainConfig};
use crate::error::{Error, Result};
use crate::format::{self, ArrayEntry, SCHEMA_VERSION};
use crate::model::{Backbone, Model, ModelConfig, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
const KIND: &str = "checkpoint";

/// Trained parameters with the optimizer state needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub phase: Phase,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    /// SHA-256 of `(phase, model_config, train_config)` as JSON.
    pub fingerprint: String,
    pub model: Model<T>,
    /// Momentum buffers in model parameter order.
    pub momentum: Vec<Tensor<T>>,
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: usize,
}

pub fn fingerprint(phase: Phase, model: &ModelConfig, train: &TrainConfig) -> Result<String> {
    let bytes = serde_json::to_vec(&(phase, model, train))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Tensors concatenated into one flat array, in listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGroup {
    pub array: ArrayEntry,
    pub tensors: Vec<TensorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub kind: String,
    pub phase: Phase,
    pub epoch: usize,
    pub global_step: usize,
    pub fingerprint: String,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub backbone: TensorGroup,
    pub heads: TensorGroup,
    pub optimizer: TensorGroup,
}

fn write_group<T: Scalar>(
    dir: &Path,
    file: &str,
    tensors: &[(String, &Tensor<T>)],
) -> Result<TensorGroup> {
    let flat: Vec<f32> = tensors
        .iter()
        .flat_map(|(_, t)| t.as_slice().iter().map(|v| v.as_f32()))
        .collect();
    Ok(TensorGroup {
        array: format::write_f32_array(dir, file, &flat)?,
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorSpec {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    })
}

/// Reads `group` into `targets`, which must have the listed names and shapes.
fn read_group<T: Scalar>(
    dir: &Path,
    group: &TensorGroup,
    names: &[String],
    targets: Vec<&mut Tensor<T>>,
) -> Result<()> {
    let manifest = dir.join(CHECKPOINT_MANIFEST);
    let malformed = |reason: String| Error::Malformed {
        path: manifest.clone(),
        reason,
    };
    if group.tensors.len() != targets.len() {
        return Err(malformed(format!(
            "{} tensors listed, model has {}",
            group.tensors.len(),
            targets.len()
        )));
    }
    let data = format::read_f32_array(dir, &group.array)?;
    let mut offset = 0;
    for ((spec, name), t) in group.tensors.iter().zip(names).zip(targets) {
        if &spec.name != name || spec.shape != t.shape() {
            return Err(malformed(format!(
                "tensor {} {:?} does not match model {} {:?}",
                spec.name,
                spec.shape,
                name,
                t.shape()
            )));
        }
        let n = t.len();
        let src = data
            .get(offset..offset + n)
            .ok_or_else(|| malformed(format!("array too short for {name}")))?;
        t.as_mut_slice()
            .iter_mut()
            .zip(src)
            .for_each(|(d, &s)| *d = T::of_f32(s));
        offset += n;
    }
    if offset != data.len() {
        return Err(malformed(format!(
            "{} values left over",
            data.len() - offset
        )));
    }
    Ok(())
}

impl<T: Scalar> Checkpoint<T> {
    /// Writes arrays then the manifest, each atomically. Values are stored
    /// as `f32`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names: Vec<String> = self.model.params().into_iter().map(|(n, _)| n).collect();
        let momentum: Vec<(String, &Tensor<T>)> = names
            .iter()
            .map(|n| format!("momentum.{n}"))
            .zip(self.momentum.iter())
            .collect();
        let manifest = CheckpointManifest {
            schema_version: SCHEMA_VERSION,
            kind: KIND.into(),
            phase: self.phase,
            epoch: self.epoch,
            global_step: self.global_step,
            fingerprint: self.fingerprint.clone(),
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            backbone: write_group(dir, "backbone.f32", &self.model.backbone.params())?,
            heads: write_group(dir, "heads.f32", &self.model.heads.params())?,
            optimizer: write_group(dir, "optimizer.f32", &momentum)?,
        };
        format::write_manifest(&dir.join(CHECKPOINT_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_checkpoint_manifest(dir)?;
        let mut model = Model::<T>::zeros(&manifest.model_config)?;
        let bb_names: Vec<String> = model
            .backbone
            .params()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        let head_names: Vec<String> = model.heads.params().into_iter().map(|(n, _)| n).collect();
        read_group(
            dir,
            &manifest.backbone,
            &bb_names,
            model.backbone.params_mut(),
        )?;
        read_group(dir, &manifest.heads, &head_names, model.heads.params_mut())?;
        let mut momentum = model.zeros_like();
        let m_names: Vec<String> = model
            .params()
            .into_iter()
            .map(|(n, _)| format!("momentum.{n}"))
            .collect();
        read_group(dir, &manifest.optimizer, &m_names, momentum.params_mut())?;
        let momentum = momentum
            .params()
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        Ok(Checkpoint {
            phase: manifest.phase,
            model_config: manifest.model_config,
            train_config: manifest.train_config,
            fingerprint: manifest.fingerprint,
            model,
            momentum,
            epoch: manifest.epoch,
            global_step: manifest.global_step,
        })
    }
}

pub fn read_checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(CHECKPOINT_MANIFEST);
    let manifest: CheckpointManifest = format::read_manifest(&path)?;
    if manifest.kind != KIND {
        return Err(Error::Malformed {
            path,
            reason: format!("kind {:?} is not {KIND}", manifest.kind),
        });
    }
    Ok(manifest)
}

/// Loads only the backbone of a saved checkpoint, ignoring its heads.
pub fn load_backbone<T: Scalar>(dir: &Path) -> Result<(ModelConfig, Backbone<T>)> {
    let manifest = read_checkpoint_manifest(dir)?;
    manifest.model_config.validate()?;
    let mut backbone = Backbone::<T>::zeros(&manifest.model_config);
    let names: Vec<String> = backbone.params().into_iter().map(|(n, _)| n).collect();
    read_group(dir, &manifest.backbone, &names, backbone.params_mut())?;
    Ok((manifest.model_config, backbone))
}
