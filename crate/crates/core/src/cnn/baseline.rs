use super::PatchScore;
use crate::image::{mean_intensity, GrayImage};

/// Scores a patch from its mean intensity alone:
/// `live = sigmoid((threshold - mean) / 16)`. Darker-than-threshold patches
/// lean live. Useful for exercising aggregation without a trained model.
pub fn baseline_classify(patch: &GrayImage, threshold: f64) -> PatchScore {
    let z = (threshold - mean_intensity(patch)) / 16.0;
    PatchScore::from_live(1.0 / (1.0 + (-z).exp()))
}
