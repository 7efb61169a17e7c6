//! Action cross-entropy, the three distillation losses and their weighted
//! combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_softmax, softmax, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_ego: f64,
    pub w_obj: f64,
    pub w_int: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_ego: 0.1,
            w_obj: 0.5,
            w_int: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_ego, self.w_obj, self.w_int]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

/// Which auxiliary tasks contribute. `hand_map`/`object_map` mask the two
/// halves of the interaction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFlags {
    pub ego: bool,
    pub obj: bool,
    pub int: bool,
    pub hand_map: bool,
    pub object_map: bool,
}

impl TaskFlags {
    pub const ALL: TaskFlags = TaskFlags {
        ego: true,
        obj: true,
        int: true,
        hand_map: true,
        object_map: true,
    };
    /// Classification loss only.
    pub const NONE: TaskFlags = TaskFlags {
        ego: false,
        obj: false,
        int: false,
        hand_map: true,
        object_map: true,
    };

    pub fn int_hand(&self) -> bool {
        self.int && self.hand_map
    }

    pub fn int_object(&self) -> bool {
        self.int && self.object_map
    }

    pub fn any_aux(&self) -> bool {
        self.ego || self.obj || self.int_hand() || self.int_object()
    }
}

/// Per-cell form of the interaction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntLossForm {
    /// `-[y log s(l) + (1 - y) log(1 - s(l))]`.
    #[default]
    Bce,
    /// `-y log s(l)` only; degenerate (minimized by `l -> +inf`).
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport<T> {
    pub l_act: T,
    pub l_ego: T,
    pub l_obj: T,
    pub l_int: T,
    pub l_total: T,
}

impl<T: Scalar> LossReport<T> {
    pub fn all_finite(&self) -> bool {
        [self.l_act, self.l_ego, self.l_obj, self.l_int, self.l_total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn check_label(len: usize, label: usize) -> Result<()> {
    if label < len {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "label {label} out of range for {len} classes"
        )))
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: vec![expected],
            got: vec![got],
        })
    }
}

/// `-log softmax(logits)[label]`.
pub fn loss_act<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    check_label(logits.len(), label)?;
    // (max - z_label) + log(sum exp(z - max)), kept apart so a confident
    // correct prediction does not cancel against the max.
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let top = logits.iter().position(|&z| z == max).expect("nonempty");
    let rest: T = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &z)| (z - max).exp())
        .sum();
    Ok((max - logits[label]) + rest.ln_1p())
}

/// [`loss_act`] and its gradient `softmax(logits) - onehot(label)`.
pub fn loss_act_grad<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    let loss = loss_act(logits, label)?;
    let mut g = softmax(logits);
    g[label] -= T::one();
    Ok((loss, g))
}

/// Soft-target cross-entropy `-sum_i target_i * logprob_i`. Terms with a
/// zero target contribute nothing even when the log-probability is `-inf`.
pub fn soft_cross_entropy<T: Scalar>(logprobs: &[T], target: &[T]) -> Result<T> {
    check_len(target.len(), logprobs.len())?;
    Ok(target
        .iter()
        .zip(logprobs)
        .filter(|(&t, _)| t != T::zero())
        .map(|(&t, &lp)| -t * lp)
        .sum())
}

/// Ego distillation loss on head log-probabilities.
pub fn loss_ego<T: Scalar>(ego_logprobs: &[T], target: &[T; 2]) -> Result<T> {
    soft_cross_entropy(ego_logprobs, target)
}

/// Object distillation loss on head log-probabilities.
pub fn loss_obj<T: Scalar>(obj_logprobs: &[T], target: &[T]) -> Result<T> {
    soft_cross_entropy(obj_logprobs, target)
}

/// Soft cross-entropy evaluated from raw logits, with the gradient with
/// respect to those logits: `softmax(z) * sum(target) - target`.
pub fn soft_cross_entropy_grad<T: Scalar>(logits: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    let loss = soft_cross_entropy(&log_softmax(logits), target)?;
    let mass: T = target.iter().copied().sum();
    let g = softmax(logits)
        .into_iter()
        .zip(target)
        .map(|(p, &t)| p * mass - t)
        .collect();
    Ok((loss, g))
}

#[inline]
fn sigmoid<T: Scalar>(l: T) -> T {
    if l >= T::zero() {
        T::one() / (T::one() + (-l).exp())
    } else {
        let e = l.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(-|l|))`.
#[inline]
fn log1p_exp_neg_abs<T: Scalar>(l: T) -> T {
    (-l.abs()).exp().ln_1p()
}

/// Per-cell loss and gradient with respect to the logit.
#[inline]
fn cell_loss<T: Scalar>(l: T, y: T, form: IntLossForm) -> (T, T) {
    match form {
        IntLossForm::Bce => (
            l.max(T::zero()) - l * y + log1p_exp_neg_abs(l),
            sigmoid(l) - y,
        ),
        IntLossForm::Literal => {
            let softplus_neg = (-l).max(T::zero()) + log1p_exp_neg_abs(l);
            (y * softplus_neg, y * (sigmoid(l) - T::one()))
        }
    }
}

/// One map's logits with its `[0, 1]` target.
#[derive(Debug, Clone, Copy)]
pub struct MapTerm<'a, T> {
    pub logits: &'a [T],
    pub target: &'a [f32],
}

/// Interaction loss: per-cell sigmoid cross-entropy summed over every cell
/// of every supplied map, divided by the total cell count. Returns the
/// loss and one gradient per map.
pub fn loss_int_grad<T: Scalar>(
    maps: &[MapTerm<'_, T>],
    form: IntLossForm,
) -> Result<(T, Vec<Vec<T>>)> {
    let mut count = 0usize;
    for m in maps {
        check_len(m.target.len(), m.logits.len())?;
        if let Some(bad) = m.target.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::InvalidArgument(format!(
                "interaction target {bad} outside [0, 1]"
            )));
        }
        count += m.logits.len();
    }
    if count == 0 {
        return Ok((T::zero(), maps.iter().map(|_| Vec::new()).collect()));
    }
    let inv = T::one() / T::from_usize(count).expect("count");
    let mut total = T::zero();
    let grads = maps
        .iter()
        .map(|m| {
            m.logits
                .iter()
                .zip(m.target)
                .map(|(&l, &y)| {
                    let (v, g) = cell_loss(l, T::of_f32(y), form);
                    total += v;
                    g * inv
                })
                .collect()
        })
        .collect();
    Ok((total * inv, grads))
}

/// Interaction loss over the hand and object maps.
pub fn loss_int<T: Scalar>(
    hand_logits: &[T],
    object_logits: &[T],
    target: &crate::labelgen::InteractionMap,
    form: IntLossForm,
) -> Result<T> {
    let maps = [
        MapTerm {
            logits: hand_logits,
            target: &target.hand_map,
        },
        MapTerm {
            logits: object_logits,
            target: &target.object_map,
        },
    ];
    Ok(loss_int_grad(&maps, form)?.0)
}

/// Mean binary entropy of a target map set, the minimum of the BCE form.
pub fn binary_entropy_mean<T: Scalar>(targets: &[&[f32]]) -> T {
    let n: usize = targets.iter().map(|t| t.len()).sum();
    let h: T = targets
        .iter()
        .flat_map(|t| t.iter())
        .map(|&y| {
            let y = T::of_f32(y);
            let term = |p: T| {
                if p > T::zero() {
                    -p * p.ln()
                } else {
                    T::zero()
                }
            };
            term(y) + term(T::one() - y)
        })
        .sum();
    h / T::from_usize(n.max(1)).expect("count")
}

/// Per-clip loss components; `None` for tasks that were not computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents<T> {
    pub l_act: T,
    pub l_ego: Option<T>,
    pub l_obj: Option<T>,
    pub l_int: Option<T>,
}

/// Weighted objective `l_act + w_ego l_ego + w_obj l_obj + w_int l_int`.
/// Disabled tasks report 0 and are not added.
pub fn loss_total<T: Scalar>(
    c: &LossComponents<T>,
    weights: &LossWeights,
    flags: &TaskFlags,
) -> LossReport<T> {
    let mut r = LossReport {
        l_act: c.l_act,
        l_total: c.l_act,
        ..Default::default()
    };
    let int_on = flags.int_hand() || flags.int_object();
    for (on, value, w, slot) in [
        (flags.ego, c.l_ego, weights.w_ego, &mut r.l_ego),
        (flags.obj, c.l_obj, weights.w_obj, &mut r.l_obj),
        (int_on, c.l_int, weights.w_int, &mut r.l_int),
    ] {
        if let (true, Some(v)) = (on, value) {
            *slot = v;
            r.l_total += T::lit(w) * v;
        }
    }
    r
}
