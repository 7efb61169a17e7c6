//! Top-k accuracy and multi-label mean average precision.
//!
//! Rankings are by descending score. Equal scores are ordered by item
//! index (for AP) or class index (for top-k), lower first.

use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metric: String,
    /// In `[0, 1]`.
    pub value: f64,
    /// Per-class AP; `None` for classes without positives.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<Option<f64>>>,
    pub n: usize,
}

fn check_scores<S: PartialOrd>(scores: &[S]) -> Result<()> {
    // A value that is not equal to itself is NaN.
    if scores.iter().any(|s| s.partial_cmp(s).is_none()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    Ok(())
}

/// Fraction of items whose label is among the `k` highest scores.
pub fn top_k_accuracy<S: PartialOrd + Copy>(
    scores: &[Vec<S>],
    labels: &[usize],
    k: usize,
) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(
            "top-k accuracy of an empty set".into(),
        ));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: vec![scores.len()],
            got: vec![labels.len()],
        });
    }
    let mut hits = 0usize;
    for (row, &label) in scores.iter().zip(labels) {
        check_scores(row)?;
        if k == 0 || k > row.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} with {} classes",
                row.len()
            )));
        }
        if label >= row.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                row.len()
            )));
        }
        let s = row[label];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > s || (v == s && j < label))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / scores.len() as f64)
}

/// Item order by descending score, ties by index.
fn ranking<S: PartialOrd>(scores: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// All-points average precision in accumulator `A`: the mean, over
/// positives, of precision at each positive's rank. `None` without
/// positives.
pub fn average_precision_in<A, S>(scores: &[S], positives: &[bool]) -> Result<Option<A>>
where
    A: Num + FromPrimitive + Clone,
    S: PartialOrd,
{
    if scores.len() != positives.len() {
        return Err(Error::Shape {
            expected: vec![scores.len()],
            got: vec![positives.len()],
        });
    }
    check_scores(scores)?;
    let num = |n: usize| A::from_usize(n).expect("count fits accumulator");
    let mut sum = A::zero();
    let mut seen = 0usize;
    for (rank, i) in ranking(scores).into_iter().enumerate() {
        if positives[i] {
            seen += 1;
            sum = sum + num(seen) / num(rank + 1);
        }
    }
    Ok((seen > 0).then(|| sum / num(seen)))
}

pub fn average_precision<S: PartialOrd>(scores: &[S], positives: &[bool]) -> Result<Option<f64>> {
    average_precision_in(scores, positives)
}

/// Per-class AP in `A` over an `items x classes` score matrix.
pub fn per_class_ap_in<A, S>(scores: &[Vec<S>], label_sets: &[Vec<bool>]) -> Result<Vec<Option<A>>>
where
    A: Num + FromPrimitive + Clone,
    S: PartialOrd + Copy,
{
    if scores.is_empty() {
        return Err(Error::InvalidArgument("mAP of an empty set".into()));
    }
    if scores.len() != label_sets.len() {
        return Err(Error::Shape {
            expected: vec![scores.len()],
            got: vec![label_sets.len()],
        });
    }
    let classes = scores[0].len();
    if let Some(bad) = scores
        .iter()
        .map(Vec::len)
        .chain(label_sets.iter().map(Vec::len))
        .find(|&n| n != classes)
    {
        return Err(Error::Shape {
            expected: vec![classes],
            got: vec![bad],
        });
    }
    (0..classes)
        .map(|c| {
            let s: Vec<S> = scores.iter().map(|r| r[c]).collect();
            let y: Vec<bool> = label_sets.iter().map(|r| r[c]).collect();
            average_precision_in(&s, &y)
        })
        .collect()
}

/// Mean of per-class AP over classes with at least one positive.
pub fn mean_average_precision_in<A, S>(
    scores: &[Vec<S>],
    label_sets: &[Vec<bool>],
) -> Result<(A, Vec<Option<A>>)>
where
    A: Num + FromPrimitive + Clone,
    S: PartialOrd + Copy,
{
    let per_class = per_class_ap_in::<A, S>(scores, label_sets)?;
    let included: Vec<&A> = per_class.iter().flatten().collect();
    if included.is_empty() {
        return Err(Error::InvalidArgument(
            "no class has a positive item".into(),
        ));
    }
    let n = A::from_usize(included.len()).expect("count");
    let sum = included
        .into_iter()
        .fold(A::zero(), |acc, v| acc + v.clone());
    Ok((sum / n, per_class))
}

pub fn mean_average_precision<S: PartialOrd + Copy>(
    scores: &[Vec<S>],
    label_sets: &[Vec<bool>],
) -> Result<EvalResult> {
    let (value, per_class) = mean_average_precision_in::<f64, S>(scores, label_sets)?;
    Ok(EvalResult {
        metric: "map".into(),
        value,
        per_class: Some(per_class),
        n: scores.len(),
    })
}

/// Exact mAP over rationals.
pub fn mean_average_precision_exact<S: PartialOrd + Copy>(
    scores: &[Vec<S>],
    label_sets: &[Vec<bool>],
) -> Result<(BigRational, Vec<Option<BigRational>>)> {
    mean_average_precision_in(scores, label_sets)
}

pub fn top_k_result<S: PartialOrd + Copy>(
    scores: &[Vec<S>],
    labels: &[usize],
    k: usize,
) -> Result<EvalResult> {
    Ok(EvalResult {
        metric: format!("top{k}"),
        value: top_k_accuracy(scores, labels, k)?,
        per_class: None,
        n: scores.len(),
    })
}
