//! Visual decoding operators.
//!
//! Parametric models of the perceptual operations people perform when
//! reading charts: projecting a point onto an axis, locating a curve's peak,
//! judging its steepest slope, and bisecting the area under it. Operators
//! live in visual-angle space so that parameters learned on one display
//! transfer to another. The crate fits operators to trial data, combines
//! them with inverse-MSE fusion, composes them into mean-estimation
//! strategies, and scores out-of-sample predictions.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod composition;
pub mod curves;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod numeric;
pub mod operators;
pub mod perceptual_space;
pub mod seed;
pub mod simulation;
pub mod stimuli;

pub use error::{Error, Result};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
