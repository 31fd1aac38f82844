//! Margin-gap classifiers on heavy-tailed and spectrally embedded data:
//! capacity estimation, margin solvers and generalization bounds.

// `!(x >= 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod capacity;
pub mod classify;
pub mod error;
pub mod featuregen;
pub mod harness;
pub mod norm;
pub mod rng;
pub mod spectral;
pub mod tol;

pub use error::{Error, Result};
pub use norm::{FeatureVector, GapClassifier, NormSpec};
pub use rng::RngStream;
