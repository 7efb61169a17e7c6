//! Backbone, classification head and distillation heads, with hand-written
//! backward passes.

mod backbone;
mod conv;
mod heads;
mod linear;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::tensor::Tensor;

pub use backbone::{Backbone, BackboneCache};
pub use conv::{Conv3d, ConvCache};
pub use heads::{HeadCache, HeadGrads, HeadMask, HeadOutputs, HeadSet, MapCache, MapHead};
pub use linear::Linear;

/// A named collection of parameter tensors. The gradient of a parameter
/// set is stored in a zeroed clone of the same type.
pub trait ParamSet<T: Scalar> {
    fn params(&self) -> Vec<(String, &Tensor<T>)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }
}

/// A video encoder mapping a `[C, L, H, W]` clip to a `[c, t, h, w]`
/// feature.
pub trait Encoder<T: Scalar>: ParamSet<T> + Clone + Send + Sync {
    type Cache;

    fn feature_shape(&self, input_shape: [usize; 4]) -> Result<[usize; 4]>;

    fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Self::Cache)>;

    /// Accumulates parameter gradients into `grads`; returns the input
    /// gradient when `input_grad` is set.
    fn backward(
        &self,
        cache: &Self::Cache,
        grad_feature: &Tensor<T>,
        grads: &mut Self,
        input_grad: bool,
    ) -> Result<Option<Tensor<T>>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Output channels of each backbone block.
    pub channels: Vec<usize>,
    /// `(t, h, w)` stride of each backbone block.
    pub strides: Vec<[usize; 3]>,
    pub kernel: [usize; 3],
    /// Hidden channels of the interaction-map heads.
    pub map_hidden: usize,
    pub num_classes: usize,
    pub num_object_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            channels: vec![8, 16, 32],
            strides: vec![[1, 2, 2], [2, 2, 2], [1, 1, 1]],
            kernel: [3, 3, 3],
            map_hidden: 16,
            num_classes: 4,
            num_object_classes: 5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() {
            return Err(Error::Config(
                "channels and strides must be nonempty and equal length".into(),
            ));
        }
        let positive = self.in_channels > 0
            && self.map_hidden > 0
            && self.num_classes > 0
            && self.num_object_classes >= 2
            && self.channels.iter().all(|&c| c > 0)
            && self.strides.iter().flatten().all(|&s| s > 0)
            && self.kernel.iter().all(|&k| k % 2 == 1);
        if !positive {
            return Err(Error::Config(
                "model sizes must be positive and kernels odd".into(),
            ));
        }
        Ok(())
    }

    pub fn feature_channels(&self) -> usize {
        *self.channels.last().expect("validated")
    }
}

// Uniform init gains: layers followed by ReLU use 6, output layers 3.
pub(crate) const RELU_GAIN: f64 = 6.0;
pub(crate) const OUTPUT_GAIN: f64 = 3.0;

pub(crate) fn init_rng(seed: u64, name: &str) -> rand_chacha::ChaCha8Rng {
    seed::rng(seed, &[seed::TAG_INIT, seed::hash_str(name)])
}

/// Backbone plus heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T, E = Backbone<T>> {
    pub backbone: E,
    pub heads: HeadSet<T>,
}

impl<T: Scalar> Model<T> {
    /// Fan-in scaled uniform weights, zero biases; every tensor draws from
    /// its own stream keyed by `(seed, name)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Model {
            backbone: Backbone::init(config, seed),
            heads: HeadSet::init(config, seed),
        })
    }

    /// All-zero parameters with the architecture of `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Model {
            backbone: Backbone::zeros(config),
            heads: HeadSet::zeros(config),
        })
    }
}

/// Initializes `(Backbone, HeadSet)` for `config`.
pub fn init_parameters<T: Scalar>(
    config: &ModelConfig,
    seed: u64,
) -> Result<(Backbone<T>, HeadSet<T>)> {
    let m = Model::<T>::init(config, seed)?;
    Ok((m.backbone, m.heads))
}

impl<T: Scalar, E: Encoder<T>> ParamSet<T> for Model<T, E> {
    /// Backbone tensors first, then heads.
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = self.backbone.params();
        v.extend(self.heads.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.backbone.params_mut();
        v.extend(self.heads.params_mut());
        v
    }

    fn zeros_like(&self) -> Self {
        Model {
            backbone: self.backbone.zeros_like(),
            heads: self.heads.zeros_like(),
        }
    }
}
