use crate::error::{Error, Result};
use crate::scalar::{softmax, Scalar};

/// Video-level ego distribution `(p_exo, p_ego)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoScore<T = f32> {
    pub probs: [T; 2],
}

/// Video-level distribution over object classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScore<T = f32> {
    pub probs: Vec<T>,
}

impl<T: Scalar> EgoScore<T> {
    pub fn cast<U: Scalar>(&self) -> EgoScore<U> {
        EgoScore {
            probs: self.probs.map(|p| U::lit(p.to_f64_lossy())),
        }
    }
}

impl<T: Scalar> ObjectScore<T> {
    pub fn cast<U: Scalar>(&self) -> ObjectScore<U> {
        ObjectScore {
            probs: self
                .probs
                .iter()
                .map(|p| U::lit(p.to_f64_lossy()))
                .collect(),
        }
    }
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta > T::zero() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "temperature must be positive and finite, got {beta}"
        )))
    }
}

/// Temperature softmax of the per-class mean of `rows`.
fn tempered_mean_softmax<T: Scalar>(rows: &[&[T]], beta: T) -> Vec<T> {
    let classes = rows[0].len();
    let scale = T::one() / (T::from_usize(rows.len()).expect("count") * beta);
    let mean: Vec<T> = (0..classes)
        .map(|i| rows.iter().map(|r| r[i]).sum::<T>() * scale)
        .collect();
    softmax(&mean)
}

/// Ego-Score from the ego-classifier logits of `N` clips of one video:
/// softmax over classes of `(1 / (N * beta)) * sum_n z_i(x_n)`.
pub fn ego_score<T: Scalar>(clip_logits: &[[T; 2]], beta: T) -> Result<EgoScore<T>> {
    if clip_logits.is_empty() {
        return Err(Error::InvalidArgument(
            "ego_score needs at least one clip".into(),
        ));
    }
    check_beta(beta)?;
    let rows: Vec<&[T]> = clip_logits.iter().map(|r| r.as_slice()).collect();
    let p = tempered_mean_softmax(&rows, beta);
    Ok(EgoScore {
        probs: [p[0], p[1]],
    })
}

/// Object-Score from per-frame recognizer logits: the same tempered
/// softmax over the frame-averaged logits.
pub fn object_score<T: Scalar>(frame_logits: &[Vec<T>], beta: T) -> Result<ObjectScore<T>> {
    let Some(first) = frame_logits.first() else {
        return Err(Error::InvalidArgument(
            "object_score needs at least one frame".into(),
        ));
    };
    check_beta(beta)?;
    let classes = first.len();
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "object_score needs at least 2 classes, got {classes}"
        )));
    }
    if let Some(bad) = frame_logits.iter().find(|r| r.len() != classes) {
        return Err(Error::Shape {
            expected: vec![classes],
            got: vec![bad.len()],
        });
    }
    let rows: Vec<&[T]> = frame_logits.iter().map(|r| r.as_slice()).collect();
    Ok(ObjectScore {
        probs: tempered_mean_softmax(&rows, beta),
    })
}
