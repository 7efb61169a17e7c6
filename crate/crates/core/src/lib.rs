//! Ego-Exo style pre-training on synthetic video.
//!
//! Third-person clips are paired with egocentric pseudo-labels produced by
//! teacher models (an ego-classifier, an object recognizer and a hand-object
//! detector). A small 3D-convolutional backbone is trained with an action
//! classification loss plus three distillation losses, then fine-tuned on a
//! downstream egocentric task.
//!
//! The numerical core is generic over [`Scalar`]: training runs at `f32`,
//! gradient checks at `f64`, and average precision can be accumulated
//! exactly over [`num_rational::BigRational`].

pub mod error;
pub mod format;
pub mod labelgen;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod teachers;
pub mod tensor;
pub mod video_data;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Single-precision tensor, the on-disk and training precision.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor used by gradient checks.
pub type Tensor64 = tensor::Tensor<f64>;

pub type Backbone32 = model::Backbone<f32>;
pub type Backbone64 = model::Backbone<f64>;
pub type HeadSet32 = model::HeadSet<f32>;
pub type HeadSet64 = model::HeadSet<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type Checkpoint32 = pipeline::Checkpoint<f32>;
