use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn init(&mut self, gain: f64, rng: &mut impl Rng) {
        let bound = (gain / self.inputs() as f64).sqrt();
        for w in self.weight.as_mut_slice() {
            *w = T::lit(rng.random_range(-bound..bound));
        }
        self.bias.fill(T::zero());
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.inputs();
        if x.len() != n {
            return Err(Error::Shape {
                expected: vec![n],
                got: vec![x.len()],
            });
        }
        let w = self.weight.as_slice();
        Ok(self
            .bias
            .as_slice()
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                b + w[o * n..(o + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(&a, &v)| a * v)
                    .sum::<T>()
            })
            .collect())
    }

    /// Accumulates parameter gradients and returns `d loss / d x`.
    pub fn backward(&self, x: &[T], grad_out: &[T], grads: &mut Linear<T>) -> Vec<T> {
        let n = self.inputs();
        let w = self.weight.as_slice();
        let mut gx = vec![T::zero(); n];
        for (o, &g) in grad_out.iter().enumerate() {
            grads.bias.as_mut_slice()[o] += g;
            let gw = &mut grads.weight.as_mut_slice()[o * n..(o + 1) * n];
            for i in 0..n {
                gw[i] += g * x[i];
                gx[i] += g * w[o * n + i];
            }
        }
        gx
    }
}
