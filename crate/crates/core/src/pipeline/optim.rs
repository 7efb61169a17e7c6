use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// SGD with heavy-ball momentum and L2 weight decay:
///
/// ```text
/// g   = grad + weight_decay * p
/// buf = momentum * buf + g
/// p   = p - lr * buf
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    /// One buffer per parameter tensor, in parameter order.
    pub buffers: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64, shapes: &[&[usize]]) -> Self {
        Sgd {
            momentum,
            weight_decay,
            buffers: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// Updates every parameter whose `trainable` flag is set; the others and
    /// their buffers are left untouched.
    pub fn step(
        &mut self,
        params: Vec<&mut Tensor<T>>,
        grads: &[&Tensor<T>],
        trainable: &[bool],
        lr: f64,
    ) -> Result<()> {
        let n = self.buffers.len();
        if params.len() != n || grads.len() != n || trainable.len() != n {
            return Err(Error::Shape {
                expected: vec![n],
                got: vec![params.len(), grads.len(), trainable.len()],
            });
        }
        let (m, wd, lr) = (T::lit(self.momentum), T::lit(self.weight_decay), T::lit(lr));
        for (((p, g), buf), &on) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.buffers)
            .zip(trainable)
        {
            if !on {
                continue;
            }
            if p.shape() != g.shape() || p.shape() != buf.shape() {
                return Err(Error::Shape {
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            for ((pv, &gv), bv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(buf.as_mut_slice())
            {
                let d = gv + wd * *pv;
                *bv = m * *bv + d;
                *pv -= lr * *bv;
            }
        }
        Ok(())
    }
}
