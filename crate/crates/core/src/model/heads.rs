use super::conv::{dims4, Conv3d, ConvCache};
use super::linear::Linear;
use super::{init_rng, ModelConfig, ParamSet, OUTPUT_GAIN, RELU_GAIN};
use crate::error::{Error, Result};
use crate::scalar::{log_softmax, Scalar};
use crate::tensor::Tensor;

/// Interaction-map head: `1x3x3` conv, ReLU, `1x1x1` conv to one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MapHead<T> {
    pub conv1: Conv3d<T>,
    pub conv2: Conv3d<T>,
}

pub struct MapCache<T> {
    c1: ConvCache<T>,
    hidden: Tensor<T>,
    c2: ConvCache<T>,
}

impl<T: Scalar> MapHead<T> {
    fn zeros(channels: usize, hidden: usize) -> Self {
        MapHead {
            conv1: Conv3d::zeros(channels, hidden, [1, 3, 3], [1, 1, 1], [0, 1, 1]),
            conv2: Conv3d::zeros(hidden, 1, [1, 1, 1], [1, 1, 1], [0, 0, 0]),
        }
    }

    fn init(&mut self, seed: u64, name: &str) {
        self.conv1
            .init(RELU_GAIN, &mut init_rng(seed, &format!("{name}.conv1")));
        self.conv2
            .init(OUTPUT_GAIN, &mut init_rng(seed, &format!("{name}.conv2")));
    }

    /// Raw per-cell logits, flattened `[t, h, w]`.
    pub fn forward(&self, feature: &Tensor<T>) -> Result<(Vec<T>, MapCache<T>)> {
        let (mut hidden, c1) = self.conv1.forward(feature)?;
        hidden
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.max(T::zero()));
        let (out, c2) = self.conv2.forward(&hidden)?;
        Ok((out.into_vec(), MapCache { c1, hidden, c2 }))
    }

    fn backward(
        &self,
        feature: &Tensor<T>,
        cache: &MapCache<T>,
        grad: &[T],
        grads: &mut MapHead<T>,
    ) -> Result<Tensor<T>> {
        let [_, t, h, w] = dims4(&cache.hidden)?;
        let g_out = Tensor::from_vec(&[1, t, h, w], grad.to_vec())?;
        let mut g_hidden = self
            .conv2
            .backward(&cache.hidden, &cache.c2, &g_out, &mut grads.conv2, true)?
            .expect("input grad");
        for (g, &a) in g_hidden
            .as_mut_slice()
            .iter_mut()
            .zip(cache.hidden.as_slice())
        {
            if a <= T::zero() {
                *g = T::zero();
            }
        }
        Ok(self
            .conv1
            .backward(feature, &cache.c1, &g_hidden, &mut grads.conv1, true)?
            .expect("input grad"))
    }
}

/// Which heads to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadMask {
    pub act: bool,
    pub ego: bool,
    pub obj: bool,
    pub hand: bool,
    pub object: bool,
}

impl HeadMask {
    pub const ALL: HeadMask = HeadMask {
        act: true,
        ego: true,
        obj: true,
        hand: true,
        object: true,
    };
    pub const ACT_ONLY: HeadMask = HeadMask {
        act: true,
        ego: false,
        obj: false,
        hand: false,
        object: false,
    };
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadOutputs<T> {
    pub act_logits: Option<Vec<T>>,
    pub ego_logits: Option<Vec<T>>,
    /// Log-softmax of `ego_logits`.
    pub ego_logprobs: Option<Vec<T>>,
    pub obj_logits: Option<Vec<T>>,
    pub obj_logprobs: Option<Vec<T>>,
    /// Raw hand-map logits, flattened `[t, h, w]`.
    pub hand_logits: Option<Vec<T>>,
    pub object_logits: Option<Vec<T>>,
}

pub struct HeadCache<T> {
    pooled: Vec<T>,
    hand: Option<MapCache<T>>,
    object: Option<MapCache<T>>,
}

/// Upstream gradients, all with respect to raw head outputs (pre-softmax
/// logits for the pooled heads).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadGrads<T> {
    pub act: Option<Vec<T>>,
    pub ego: Option<Vec<T>>,
    pub obj: Option<Vec<T>>,
    pub hand: Option<Vec<T>>,
    pub object: Option<Vec<T>>,
}

/// Action classifier and the four distillation heads. The pooled heads
/// share one spatiotemporal mean pool.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSet<T> {
    pub classifier: Linear<T>,
    pub ego: Linear<T>,
    pub obj: Linear<T>,
    pub hand: MapHead<T>,
    pub object: MapHead<T>,
}

fn mean_pool<T: Scalar>(feature: &Tensor<T>) -> Result<Vec<T>> {
    let [c, t, h, w] = dims4(feature)?;
    let p = t * h * w;
    let inv = T::one() / T::from_usize(p).expect("size");
    Ok((0..c)
        .map(|ch| {
            feature.as_slice()[ch * p..(ch + 1) * p]
                .iter()
                .copied()
                .sum::<T>()
                * inv
        })
        .collect())
}

impl<T: Scalar> HeadSet<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config.feature_channels();
        HeadSet {
            classifier: Linear::zeros(c, config.num_classes),
            ego: Linear::zeros(c, 2),
            obj: Linear::zeros(c, config.num_object_classes),
            hand: MapHead::zeros(c, config.map_hidden),
            object: MapHead::zeros(c, config.map_hidden),
        }
    }

    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut h = Self::zeros(config);
        h.classifier
            .init(OUTPUT_GAIN, &mut init_rng(seed, "heads.classifier"));
        h.ego.init(OUTPUT_GAIN, &mut init_rng(seed, "heads.ego"));
        h.obj.init(OUTPUT_GAIN, &mut init_rng(seed, "heads.obj"));
        h.hand.init(seed, "heads.hand");
        h.object.init(seed, "heads.object");
        h
    }

    /// Replaces the classifier with a freshly initialized one over
    /// `num_classes` outputs.
    pub fn reset_classifier(&mut self, num_classes: usize, seed: u64) {
        self.classifier = Linear::zeros(self.classifier.inputs(), num_classes);
        self.classifier
            .init(OUTPUT_GAIN, &mut init_rng(seed, "heads.classifier"));
    }

    pub fn forward(
        &self,
        feature: &Tensor<T>,
        mask: HeadMask,
    ) -> Result<(HeadOutputs<T>, HeadCache<T>)> {
        let [c, ..] = dims4(feature)?;
        if c != self.classifier.inputs() {
            return Err(Error::Shape {
                expected: vec![self.classifier.inputs()],
                got: vec![c],
            });
        }
        let pooled = mean_pool(feature)?;
        let mut out = HeadOutputs::default();
        if mask.act {
            out.act_logits = Some(self.classifier.forward(&pooled)?);
        }
        if mask.ego {
            let z = self.ego.forward(&pooled)?;
            out.ego_logprobs = Some(log_softmax(&z));
            out.ego_logits = Some(z);
        }
        if mask.obj {
            let z = self.obj.forward(&pooled)?;
            out.obj_logprobs = Some(log_softmax(&z));
            out.obj_logits = Some(z);
        }
        let mut cache = HeadCache {
            pooled,
            hand: None,
            object: None,
        };
        if mask.hand {
            let (z, c) = self.hand.forward(feature)?;
            out.hand_logits = Some(z);
            cache.hand = Some(c);
        }
        if mask.object {
            let (z, c) = self.object.forward(feature)?;
            out.object_logits = Some(z);
            cache.object = Some(c);
        }
        Ok((out, cache))
    }

    /// Backpropagates `grads` through the evaluated heads, accumulating
    /// parameter gradients. Returns the feature gradient.
    pub fn backward(
        &self,
        feature: &Tensor<T>,
        cache: &HeadCache<T>,
        grads: &HeadGrads<T>,
        param_grads: &mut HeadSet<T>,
    ) -> Result<Tensor<T>> {
        let [c, t, h, w] = dims4(feature)?;
        let p = t * h * w;
        let mut g_pooled: Option<Vec<T>> = None;
        let mut add_pooled = |g: Vec<T>| match g_pooled.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => g_pooled = Some(g),
        };
        if let Some(g) = &grads.act {
            add_pooled(
                self.classifier
                    .backward(&cache.pooled, g, &mut param_grads.classifier),
            );
        }
        if let Some(g) = &grads.ego {
            add_pooled(self.ego.backward(&cache.pooled, g, &mut param_grads.ego));
        }
        if let Some(g) = &grads.obj {
            add_pooled(self.obj.backward(&cache.pooled, g, &mut param_grads.obj));
        }
        let mut g_feature = Tensor::zeros(&[c, t, h, w]);
        if let Some(gp) = g_pooled {
            let inv = T::one() / T::from_usize(p).expect("size");
            for (ch, &g) in gp.iter().enumerate() {
                let v = g * inv;
                g_feature.as_mut_slice()[ch * p..(ch + 1) * p]
                    .iter_mut()
                    .for_each(|x| *x = v);
            }
        }
        for (head, head_cache, g, pg) in [
            (&self.hand, &cache.hand, &grads.hand, &mut param_grads.hand),
            (
                &self.object,
                &cache.object,
                &grads.object,
                &mut param_grads.object,
            ),
        ] {
            if let Some(g) = g {
                let hc = head_cache
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("map head was not evaluated".into()))?;
                if g.len() != p {
                    return Err(Error::Shape {
                        expected: vec![p],
                        got: vec![g.len()],
                    });
                }
                g_feature.add_assign(&head.backward(feature, hc, g, pg)?);
            }
        }
        Ok(g_feature)
    }
}

fn map_params<'a, T>(name: &str, m: &'a MapHead<T>) -> [(String, &'a Tensor<T>); 4] {
    [
        (format!("{name}.conv1.weight"), &m.conv1.weight),
        (format!("{name}.conv1.bias"), &m.conv1.bias),
        (format!("{name}.conv2.weight"), &m.conv2.weight),
        (format!("{name}.conv2.bias"), &m.conv2.bias),
    ]
}

impl<T: Scalar> ParamSet<T> for HeadSet<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = vec![
            (
                "heads.classifier.weight".to_string(),
                &self.classifier.weight,
            ),
            ("heads.classifier.bias".to_string(), &self.classifier.bias),
            ("heads.ego.weight".to_string(), &self.ego.weight),
            ("heads.ego.bias".to_string(), &self.ego.bias),
            ("heads.obj.weight".to_string(), &self.obj.weight),
            ("heads.obj.bias".to_string(), &self.obj.bias),
        ];
        v.extend(map_params("heads.hand", &self.hand));
        v.extend(map_params("heads.object", &self.object));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.classifier.weight,
            &mut self.classifier.bias,
            &mut self.ego.weight,
            &mut self.ego.bias,
            &mut self.obj.weight,
            &mut self.obj.bias,
            &mut self.hand.conv1.weight,
            &mut self.hand.conv1.bias,
            &mut self.hand.conv2.weight,
            &mut self.hand.conv2.bias,
            &mut self.object.conv1.weight,
            &mut self.object.conv1.bias,
            &mut self.object.conv2.weight,
            &mut self.object.conv2.bias,
        ]
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|t| t.fill(T::zero()));
        z
    }
}
