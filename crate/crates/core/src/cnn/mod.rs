//! Shallow convolutional patch classifier.
//!
//! Each block is `conv(3x3, same) -> ReLU -> batch-norm -> dropout -> 2x2
//! max-pool`; the last block is flattened into a two-way dense layer and a
//! softmax giving live/spoof probabilities. Pixels are scaled to `[0, 1]`
//! before the first convolution.
//!
//! The network is generic over [`Scalar`] so that training and the model file
//! use `f32` while gradient checking runs the identical code in `f64`.

mod baseline;
mod gradcheck;
mod io;
pub(crate) mod layers;
mod model;
mod network;
mod train;

use serde::{Deserialize, Serialize};

pub use baseline::baseline_classify;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use model::{init_model, BlockWeights, ModelWeights};
pub use network::{classify_patches, forward, Mode};
pub use train::{train, EpochStats, TrainConfig};

use crate::error::{Error, Result};
use crate::label::Label;

/// Floating point type the network runs in.
pub trait Scalar:
    num_traits::Float
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Default
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

pub const NUM_CLASSES: usize = 2;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    /// Side of the square input patch.
    pub input_side: usize,
    pub block_filters: Vec<usize>,
    pub block_dropout: Vec<f64>,
    pub kernel_size: usize,
    pub pool: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            input_side: 82,
            block_filters: vec![64, 128, 256, 512],
            block_dropout: vec![0.2, 0.3, 0.4, 0.5],
            kernel_size: 3,
            pool: 2,
        }
    }
}

impl CnnConfig {
    /// Two-block configuration used for desk-scale runs.
    pub fn reduced(input_side: usize) -> Self {
        Self {
            input_side,
            block_filters: vec![8, 16],
            block_dropout: vec![0.2, 0.3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.block_filters.is_empty() {
            return bad("at least one convolution block is required".into());
        }
        if self.block_filters.len() != self.block_dropout.len() {
            return bad(format!(
                "{} filter counts but {} dropout rates",
                self.block_filters.len(),
                self.block_dropout.len()
            ));
        }
        if self.block_filters.contains(&0) {
            return bad("filter counts must be positive".into());
        }
        if self.block_dropout.iter().any(|d| !(0.0..1.0).contains(d)) {
            return bad("dropout rates must lie in [0, 1)".into());
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.pool == 0 {
            return bad("pool factor must be positive".into());
        }
        if self.final_side() == 0 {
            return bad(format!(
                "input side {} vanishes after {} poolings",
                self.input_side,
                self.block_filters.len()
            ));
        }
        Ok(())
    }

    /// Spatial side after every block's pooling.
    pub fn final_side(&self) -> usize {
        self.block_filters
            .iter()
            .fold(self.input_side, |s, _| s / self.pool.max(1))
    }

    /// Input width of the dense layer.
    pub fn dense_inputs(&self) -> usize {
        let side = self.final_side();
        self.block_filters.last().copied().unwrap_or(0) * side * side
    }
}

/// Softmax output for one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchScore {
    pub live: f64,
    pub spoof: f64,
}

impl PatchScore {
    pub fn from_live(live: f64) -> Self {
        Self {
            live,
            spoof: 1.0 - live,
        }
    }

    /// Larger probability wins; ties go to spoof.
    pub fn decision(&self) -> Label {
        if self.live > self.spoof {
            Label::Live
        } else {
            Label::Spoof
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_arithmetic() {
        let cfg = CnnConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.final_side(), 5);
        assert_eq!(cfg.dense_inputs(), 12800);
        for pair in cfg.block_filters.windows(2) {
            assert_eq!(pair[1], 2 * pair[0]);
        }
        for pair in cfg.block_dropout.windows(2) {
            assert!((pair[1] - pair[0] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = CnnConfig::reduced(24);
        cfg.validate().unwrap();
        cfg.block_dropout.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = CnnConfig::reduced(24);
        cfg.kernel_size = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = CnnConfig::reduced(3);
        assert!(cfg.validate().is_err());
        cfg.input_side = 4;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn score_decision_ties_to_spoof() {
        assert_eq!(PatchScore::from_live(0.5).decision(), Label::Spoof);
        assert_eq!(PatchScore::from_live(0.51).decision(), Label::Live);
    }
}
