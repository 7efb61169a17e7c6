use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gemm, MatRef};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 3D convolution over `[C, T, H, W]` inputs, lowered to GEMM via im2col.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    /// `[out, in, kt, kh, kw]`.
    pub weight: Tensor<T>,
    /// `[out]`.
    pub bias: Tensor<T>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

/// Saved forward state needed by [`Conv3d::backward`].
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    /// im2col matrix `[in*kt*kh*kw, P]`; empty for pointwise convs, which
    /// read the input directly.
    col: Vec<T>,
    input_dims: [usize; 4],
}

pub(crate) fn dims4(x: &Tensor<impl Scalar>) -> Result<[usize; 4]> {
    match *x.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref other => Err(Error::Shape {
            expected: vec![0; 4],
            got: other.to_vec(),
        }),
    }
}

impl<T: Scalar> Conv3d<T> {
    pub fn zeros(
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Self {
        Conv3d {
            weight: Tensor::zeros(&[out_ch, in_ch, kernel[0], kernel[1], kernel[2]]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    /// Uniform weights in `±sqrt(gain / fan_in)`, zero bias.
    pub fn init(&mut self, gain: f64, rng: &mut impl Rng) {
        let bound = (gain / self.fan_in() as f64).sqrt();
        for w in self.weight.as_mut_slice() {
            *w = T::lit(rng.random_range(-bound..bound));
        }
        self.bias.fill(T::zero());
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }

    fn fan_in(&self) -> usize {
        self.weight.shape()[1..].iter().product()
    }

    fn pointwise(&self) -> bool {
        self.kernel() == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Output `[C_out, T', H', W']` for input `[C_in, T, H, W]`.
    pub fn output_dims(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        if input[0] != self.in_channels() {
            return Err(Error::Shape {
                expected: vec![self.in_channels()],
                got: vec![input[0]],
            });
        }
        let k = self.kernel();
        let mut out = [self.out_channels(), 0, 0, 0];
        for a in 0..3 {
            let padded = input[a + 1] + 2 * self.padding[a];
            if padded < k[a] {
                return Err(Error::Shape {
                    expected: k.to_vec(),
                    got: input[1..].to_vec(),
                });
            }
            out[a + 1] = (padded - k[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    fn im2col(&self, x: &[T], dims: [usize; 4], out: [usize; 4]) -> Vec<T> {
        let [ic, it, ih, iw] = dims;
        let [_, ot, oh, ow] = out;
        let [kt, kh, kw] = self.kernel();
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let p = ot * oh * ow;
        let mut col = vec![T::zero(); ic * kt * kh * kw * p];
        let mut row = 0;
        for c in 0..ic {
            for a in 0..kt {
                for b in 0..kh {
                    for d in 0..kw {
                        let dst = &mut col[row * p..(row + 1) * p];
                        for t in 0..ot {
                            let ti = (t * st + a) as isize - pt as isize;
                            if ti < 0 || ti >= it as isize {
                                continue;
                            }
                            for y in 0..oh {
                                let yi = (y * sh + b) as isize - ph as isize;
                                if yi < 0 || yi >= ih as isize {
                                    continue;
                                }
                                let src = ((c * it + ti as usize) * ih + yi as usize) * iw;
                                let base = (t * oh + y) * ow;
                                for xo in 0..ow {
                                    let xi = (xo * sw + d) as isize - pw as isize;
                                    if xi >= 0 && xi < iw as isize {
                                        dst[base + xo] = x[src + xi as usize];
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[T], dims: [usize; 4], out: [usize; 4]) -> Vec<T> {
        let [ic, it, ih, iw] = dims;
        let [_, ot, oh, ow] = out;
        let [kt, kh, kw] = self.kernel();
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let p = ot * oh * ow;
        let mut x = vec![T::zero(); ic * it * ih * iw];
        let mut row = 0;
        for c in 0..ic {
            for a in 0..kt {
                for b in 0..kh {
                    for d in 0..kw {
                        let src_row = &col[row * p..(row + 1) * p];
                        for t in 0..ot {
                            let ti = (t * st + a) as isize - pt as isize;
                            if ti < 0 || ti >= it as isize {
                                continue;
                            }
                            for y in 0..oh {
                                let yi = (y * sh + b) as isize - ph as isize;
                                if yi < 0 || yi >= ih as isize {
                                    continue;
                                }
                                let dst = ((c * it + ti as usize) * ih + yi as usize) * iw;
                                let base = (t * oh + y) * ow;
                                for xo in 0..ow {
                                    let xi = (xo * sw + d) as isize - pw as isize;
                                    if xi >= 0 && xi < iw as isize {
                                        x[dst + xi as usize] += src_row[base + xo];
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        x
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let dims = dims4(x)?;
        let out = self.output_dims(dims)?;
        let p = out[1] * out[2] * out[3];
        let oc = out[0];
        let k = self.fan_in();
        let col = if self.pointwise() {
            Vec::new()
        } else {
            self.im2col(x.as_slice(), dims, out)
        };
        let col_ref = if col.is_empty() { x.as_slice() } else { &col };
        let mut y = vec![T::zero(); oc * p];
        for (o, row) in y.chunks_mut(p).enumerate() {
            row.fill(self.bias.as_slice()[o]);
        }
        gemm(
            T::one(),
            MatRef::new(self.weight.as_slice(), oc, k),
            MatRef::new(col_ref, k, p),
            T::one(),
            &mut y,
            oc,
            p,
        );
        Ok((
            Tensor::from_vec(&out, y)?,
            ConvCache {
                col,
                input_dims: dims,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient when `input_grad` is set.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        cache: &ConvCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut Conv3d<T>,
        input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let dims = cache.input_dims;
        let out = self.output_dims(dims)?;
        grad_out.expect_shape(&out)?;
        let p = out[1] * out[2] * out[3];
        let oc = out[0];
        let k = self.fan_in();
        let g = grad_out.as_slice();
        let col_ref = if cache.col.is_empty() {
            x.as_slice()
        } else {
            &cache.col
        };

        for (o, gb) in grads.bias.as_mut_slice().iter_mut().enumerate() {
            *gb += g[o * p..(o + 1) * p].iter().copied().sum::<T>();
        }
        gemm(
            T::one(),
            MatRef::new(g, oc, p),
            MatRef::new(col_ref, k, p).t(),
            T::one(),
            grads.weight.as_mut_slice(),
            oc,
            k,
        );
        if !input_grad {
            return Ok(None);
        }
        let mut gcol = vec![T::zero(); k * p];
        gemm(
            T::one(),
            MatRef::new(self.weight.as_slice(), oc, k).t(),
            MatRef::new(g, oc, p),
            T::zero(),
            &mut gcol,
            k,
            p,
        );
        let gx = if cache.col.is_empty() {
            gcol
        } else {
            self.col2im(&gcol, dims, out)
        };
        Ok(Some(Tensor::from_vec(&dims, gx)?))
    }
}
