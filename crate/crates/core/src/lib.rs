//! Nonlinear convolutional layers whose receptive-field elements are raised
//! to learned exponents, with closed-form gradients, exponent constraints,
//! time-series augmentation, and a fault-classification training harness.

// `!(a <= b)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod constraints;
pub mod dataset;
pub mod error;
pub mod gradients;
pub mod model;
pub mod nlconv;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use nlconv::{Activation, Channel, Ewm, FeatureMap, LayerParams, VariantKind};
pub use numerics::{SeededRng, Tensor};
