//! Fingerprint liveness detection from densely sampled, orientation
//! normalised local patches.
//!
//! Pipeline: [`orientation`] field → [`patch`] extraction → [`cnn`] patch
//! scores → [`metrics`] aggregation and error rates.

pub mod cnn;
pub mod dataset;
pub mod error;
pub mod image;
pub mod label;
pub mod metrics;
pub mod orientation;
pub mod overlay;
pub mod patch;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
pub use image::GrayImage;
pub use label::Label;
