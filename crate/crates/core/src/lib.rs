//! Entropy-driven adaptive data augmentation.
//!
//! Each training sample is augmented with a strength equal to one minus the
//! normalized entropy of the model's softmax output for that sample, so
//! confidently classified samples receive stronger augmentation. An optional
//! entropy regularizer added to cross-entropy sharpens predictions and pushes
//! magnitudes up over training. A small from-scratch trainer makes both
//! mechanisms measurable on a laptop.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod trainer;
pub mod transforms;

pub use error::{Error, Result};
pub use image::Image;
pub use numcore::{LogitVector, LossConfig, ProbVector, SignMode};
pub use rng::AugRng;
pub use scalar::Real;
pub use transforms::{TransformKind, TransformSpec};
pub use config::RunConfig;

/// Single-precision network, the default for training.
pub type Network32 = model::Network<f32>;
/// Double-precision network, used for gradient checks.
pub type Network64 = model::Network<f64>;
pub type Sgd32 = model::Sgd<f32>;
pub type Sgd64 = model::Sgd<f64>;
pub type TrainOutcome32 = trainer::TrainOutcome<f32>;
pub type TrainOutcome64 = trainer::TrainOutcome<f64>;
