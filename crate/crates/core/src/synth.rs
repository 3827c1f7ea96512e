//! Synthetic ridge textures used as stand-ins for fingerprint captures.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;

fn check_ridge(period_px: f64, contrast: f64, noise: f64) -> Result<()> {
    if period_px.is_nan() || period_px < 4.0 {
        return Err(Error::InvalidParams(format!("period {period_px} < 4")));
    }
    if !(contrast > 0.0 && contrast <= 255.0) {
        return Err(Error::InvalidParams(format!(
            "contrast {contrast} outside (0, 255]"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParams(format!("noise amplitude {noise}")));
    }
    Ok(())
}

#[inline]
fn wave(x: usize, y: usize, cos: f64, sin: f64, period: f64, phase: f64) -> f64 {
    (2.0 * PI * (x as f64 * cos + y as f64 * sin) / period + phase).sin()
}

/// Sinusoidal stripes `128 + contrast/2 * sin(2 pi (x cos a + y sin a) / period)`
/// plus uniform noise in `[-noise, noise]`.
///
/// The intensity gradient points along `angle_degrees` (image coordinates,
/// y down); the stripes themselves run perpendicular to it.
pub fn generate_synthetic_ridge(
    width: usize,
    height: usize,
    angle_degrees: f64,
    period_px: f64,
    contrast: f64,
    noise: f64,
    seed: u64,
) -> Result<GrayImage> {
    check_ridge(period_px, contrast, noise)?;
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let (sin, cos) = angle_degrees.to_radians().sin_cos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(GrayImage::from_fn(width, height, |x, y| {
        let mut v = 128.0 + 0.5 * contrast * wave(x, y, cos, sin, period_px, 0.0);
        if noise > 0.0 {
            v += rng.gen_range(-noise..=noise);
        }
        v.round().clamp(0.0, 255.0) as u8
    }))
}

/// Parameters for [`generate_synthetic_fingerprint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerSpec {
    pub width: usize,
    pub height: usize,
    pub angle_degrees: f64,
    pub period_px: f64,
    pub contrast: f64,
    pub noise: f64,
    pub seed: u64,
}

impl FingerSpec {
    pub fn new(width: usize, height: usize, angle_degrees: f64, period_px: f64) -> Self {
        Self {
            width,
            height,
            angle_degrees,
            period_px,
            contrast: 120.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

const FINGER_MEAN: f64 = 120.0;
const BACKGROUND: f64 = 255.0;

/// Ridge stripes on a dark elliptical "finger" over a white background.
///
/// Within 70% of the ellipse radius the stripes have full contrast around a
/// mean of 120; beyond it they fade smoothly to plain white at the ellipse
/// edge. This gives the image-level mean the patch whitespace filter needs.
pub fn generate_synthetic_fingerprint(spec: &FingerSpec) -> Result<GrayImage> {
    check_ridge(spec.period_px, spec.contrast, spec.noise)?;
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::EmptyImage);
    }
    let (sin, cos) = spec.angle_degrees.to_radians().sin_cos();
    let cx = spec.width as f64 / 2.0;
    let cy = spec.height as f64 / 2.0;
    let ax = 0.45 * spec.width as f64;
    let ay = 0.45 * spec.height as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase = rng.gen_range(0.0..2.0 * PI);
    Ok(GrayImage::from_fn(spec.width, spec.height, |x, y| {
        let r = (((x as f64 - cx) / ax).powi(2) + ((y as f64 - cy) / ay).powi(2)).sqrt();
        let t = ((1.0 - r) / 0.3).clamp(0.0, 1.0);
        let weight = t * t * (3.0 - 2.0 * t);
        let mean = BACKGROUND - weight * (BACKGROUND - FINGER_MEAN);
        let mut v =
            mean + weight * 0.5 * spec.contrast * wave(x, y, cos, sin, spec.period_px, phase);
        if spec.noise > 0.0 {
            v += weight * rng.gen_range(-spec.noise..=spec.noise);
        }
        v.round().clamp(0.0, 255.0) as u8
    }))
}

/// A `side`x`side` stripe patch. Horizontal stripes vary along y, vertical
/// stripes along x. Period and phase are drawn from `rng`.
pub fn stripe_patch(side: usize, horizontal: bool, rng: &mut impl Rng) -> GrayImage {
    let period = rng.gen_range(5.0..9.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let contrast = rng.gen_range(80.0..160.0);
    let noise: Vec<f64> = (0..side * side)
        .map(|_| rng.gen_range(-12.0..12.0))
        .collect();
    GrayImage::from_fn(side, side, |x, y| {
        let along = if horizontal { y } else { x } as f64;
        let v = 128.0
            + 0.5 * contrast * (2.0 * PI * along / period + phase).sin()
            + noise[y * side + x];
        v.round().clamp(0.0, 255.0) as u8
    })
}
