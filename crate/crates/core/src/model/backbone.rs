use super::conv::{dims4, Conv3d, ConvCache};
use super::{init_rng, Encoder, ModelConfig, ParamSet, RELU_GAIN};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stack of `conv3d -> ReLU` blocks with "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone<T> {
    pub layers: Vec<Conv3d<T>>,
}

pub struct BackboneCache<T> {
    /// `activations[0]` is the input, `activations[i + 1]` the ReLU output
    /// of block `i`.
    activations: Vec<Tensor<T>>,
    convs: Vec<ConvCache<T>>,
}

impl<T: Scalar> Backbone<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let k = config.kernel;
        let pad = [k[0] / 2, k[1] / 2, k[2] / 2];
        let mut in_ch = config.in_channels;
        let layers = config
            .channels
            .iter()
            .zip(&config.strides)
            .map(|(&out_ch, &stride)| {
                let conv = Conv3d::zeros(in_ch, out_ch, k, stride, pad);
                in_ch = out_ch;
                conv
            })
            .collect();
        Backbone { layers }
    }

    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut b = Self::zeros(config);
        for (i, layer) in b.layers.iter_mut().enumerate() {
            layer.init(
                RELU_GAIN,
                &mut init_rng(seed, &format!("backbone.layer{i}")),
            );
        }
        b
    }
}

impl<T: Scalar> ParamSet<T> for Backbone<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("backbone.layer{i}.weight"), &l.weight),
                    (format!("backbone.layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|t| t.fill(T::zero()));
        z
    }
}

impl<T: Scalar> Encoder<T> for Backbone<T> {
    type Cache = BackboneCache<T>;

    fn feature_shape(&self, input_shape: [usize; 4]) -> Result<[usize; 4]> {
        self.layers
            .iter()
            .try_fold(input_shape, |dims, l| l.output_dims(dims))
    }

    fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, BackboneCache<T>)> {
        dims4(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut convs = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let (mut y, cache) = layer.forward(activations.last().expect("nonempty"))?;
            y.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = v.max(T::zero()));
            activations.push(y);
            convs.push(cache);
        }
        let feature = activations.last().expect("nonempty").clone();
        Ok((feature, BackboneCache { activations, convs }))
    }

    fn backward(
        &self,
        cache: &BackboneCache<T>,
        grad_feature: &Tensor<T>,
        grads: &mut Self,
        input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let mut g = grad_feature.clone();
        for i in (0..self.layers.len()).rev() {
            for (gv, &a) in g
                .as_mut_slice()
                .iter_mut()
                .zip(cache.activations[i + 1].as_slice())
            {
                if a <= T::zero() {
                    *gv = T::zero();
                }
            }
            let need = i > 0 || input_grad;
            match self.layers[i].backward(
                &cache.activations[i],
                &cache.convs[i],
                &g,
                &mut grads.layers[i],
                need,
            )? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }
}
