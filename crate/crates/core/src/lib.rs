//! Conformal prediction hardened against rotation-group data shifts.
//!
//! The pipeline: a frozen classifier is paired with a learned canonicalizer
//! that predicts, per input, a distribution over the elements of a cyclic
//! rotation group. Inputs are rotated back to their canonical pose before
//! classification, and the pose posteriors feed partition-conditional
//! (Mondrian) and geometrically weighted conformal calibration.
//!
//! Modules:
//! - [`group`] and [`image`]: cyclic rotation groups and their image action.
//! - [`data`]: synthetic glyphs, shifts, von Mises sampling, `CP2T` files.
//! - [`model`]: classifiers, the orbit-softmax canonicalizer, `CP2L` files.
//! - [`conformal`]: scores, quantiles, split/Mondrian/weighted calibration.
//! - [`diagnostics`]: group maps, posterior distances, geometric weights.
//! - [`experiments`]: the reproducible study runners behind the CLI.

// `!(x > 0.0)` is used throughout to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod codec;
pub mod conformal;
pub mod data;
pub mod diagnostics;
mod error;
pub mod experiments;
pub mod group;
pub mod image;
pub mod model;

pub use error::{Error, Result};
pub use group::{act, compose, inverse, CyclicGroup, GroupElement};
pub use image::GridImage;
