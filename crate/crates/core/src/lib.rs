//! Action segmentation for multi-sensor kinematic time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors, a reverse-mode tape and the Adam optimizer.
//! - [`geometry`]: Euler/rotation-matrix algebra plus the world-frame rotation
//!   and hand-inversion augmentations.
//! - [`preprocess`]: FIR low-pass + resampling, velocities and per-sequence
//!   standardization.
//! - [`model`]: the multi-stage network (dilated prediction generator with
//!   intermediate heads, bidirectional recurrent refinement stages).
//! - [`loss`]: cross-entropy plus truncated smoothing, summed over heads.
//! - [`metrics`]: accuracy, macro-F1, edit score and F1@k.
//! - [`data`]: sequence files, manifests, folds and a synthetic generator.
//! - [`harness`]: training and evaluation orchestration.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod preprocess;

pub use error::{Error, Result};
