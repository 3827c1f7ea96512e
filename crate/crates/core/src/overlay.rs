//! Colour overlay of per-patch decisions.
//!
//! Each classified patch gets one semi-transparent `sigma`-sized square
//! centred on its central region: green for live, red for spoof. Slots
//! dropped by the whitespace filter stay unmarked. With stride `sigma` the
//! squares of neighbouring slots tile without overlapping.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::label::Label;
use crate::metrics::FingerprintResult;
use crate::patch::PatchParams;

pub const LIVE_COLOUR: [u8; 3] = [0, 255, 0];
pub const SPOOF_COLOUR: [u8; 3] = [255, 0, 0];
/// Weight of the marker colour against the underlying pixel.
pub const MARKER_ALPHA: f64 = 0.5;

/// Pixel `(x, y)` at the centre of the central region of the slot whose
/// padded block starts at cell `(row, col)`.
pub fn marker_center(grid_origin: (usize, usize), params: &PatchParams) -> (usize, usize) {
    let s = params.sigma;
    let p = params.padding_multiplier;
    let half = params.patch_multiplier * s / 2;
    let (row, col) = grid_origin;
    (1 + (col + p) * s + half, 1 + (row + p) * s + half)
}

/// Top-left pixel of the marker square for a slot.
pub fn marker_origin(grid_origin: (usize, usize), params: &PatchParams) -> (usize, usize) {
    let (cx, cy) = marker_center(grid_origin, params);
    (cx - params.sigma / 2, cy - params.sigma / 2)
}

pub fn blend(gray: u8, colour: u8) -> u8 {
    (f64::from(gray) * (1.0 - MARKER_ALPHA) + f64::from(colour) * MARKER_ALPHA).round() as u8
}

pub fn gray_to_rgb(img: &GrayImage) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = img.get(x as usize, y as usize);
        Rgb([v, v, v])
    })
}

pub fn render_overlay(
    img: &GrayImage,
    result: &FingerprintResult,
    params: &PatchParams,
) -> Result<RgbImage> {
    params.validate()?;
    let mut out = gray_to_rgb(img);
    let s = params.sigma;
    for verdict in &result.per_patch {
        let (x0, y0) = marker_origin(verdict.grid_origin, params);
        if x0 + s > img.width() || y0 + s > img.height() {
            return Err(Error::OutOfBounds(format!(
                "marker for slot {:?} at ({x0}, {y0}) leaves the {}x{} image",
                verdict.grid_origin,
                img.width(),
                img.height()
            )));
        }
        let colour = match verdict.decision {
            Label::Live => LIVE_COLOUR,
            Label::Spoof => SPOOF_COLOUR,
        };
        for y in y0..y0 + s {
            for x in x0..x0 + s {
                let g = img.get(x, y);
                out.put_pixel(
                    x as u32,
                    y as u32,
                    Rgb([
                        blend(g, colour[0]),
                        blend(g, colour[1]),
                        blend(g, colour[2]),
                    ]),
                );
            }
        }
    }
    Ok(out)
}

pub fn save_overlay(overlay: &RgbImage, path: impl AsRef<std::path::Path>) -> Result<()> {
    overlay
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))
}
