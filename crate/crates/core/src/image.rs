//! 8-bit grayscale rasters and the geometric operations the patch sampler
//! needs: bilinear rotation about the image centre and centred cropping.
//!
//! Angles are in degrees in image coordinates (x to the right, y down), so a
//! positive angle turns content clockwise as displayed.

use std::path::Path;

use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Row-major 8-bit single channel image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "zero-dimension image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "zero-dimension image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Copies out the `w`x`h` window whose top-left corner is `(x, y)`.
    pub fn sub_image(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::OutOfBounds(format!(
                "window {w}x{h} at ({x}, {y}) in {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            data,
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        image::save_buffer_with_format(
            path.as_ref(),
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
            ImageFormat::Png,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Encode(other.to_string()),
        })
    }
}

/// Decodes a PNG or PGM file. Colour inputs are reduced to luminance.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let unreadable = |reason: String| Error::Unreadable {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(Error::UnsupportedFormat(path.display().to_string())),
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => unreadable(other.to_string()),
    })?;
    let luma = decoded.into_luma8();
    let (w, h) = luma.dimensions();
    GrayImage::new(w as usize, h as usize, luma.into_raw())
}

/// Arithmetic mean of all intensities.
pub fn mean_intensity(img: &GrayImage) -> f64 {
    let sum: u64 = img.data.iter().map(|&v| u64::from(v)).sum();
    sum as f64 / img.data.len() as f64
}

/// Dimensions of the canvas holding the full footprint of `width`x`height`
/// rotated by `angle_degrees`.
///
/// Quarter-turn multiples keep exact lattice dimensions. Otherwise each side
/// is rounded up to the parity of the source side, so that the canvas centre
/// and the source centre coincide on the pixel grid and a later centred crop
/// back to any same-parity size is exact.
pub fn rotated_dims(width: usize, height: usize, angle_degrees: f64) -> (usize, usize) {
    let (sin, cos) = angle_degrees.to_radians().sin_cos();
    let (w, h) = (width as f64, height as f64);
    if (sin * cos).abs() < 1e-12 {
        return if sin.abs() > 0.5 {
            (height, width)
        } else {
            (width, height)
        };
    }
    let fit = |extent: f64, source: usize| {
        let mut side = (extent - 1e-9).ceil().max(1.0) as usize;
        if (side + source) % 2 == 1 {
            side += 1;
        }
        side
    };
    (
        fit(w * cos.abs() + h * sin.abs(), width),
        fit(w * sin.abs() + h * cos.abs(), height),
    )
}

/// Inverse mapping from canvas pixels to source coordinates.
struct Rotation<'a> {
    src: &'a GrayImage,
    sin: f64,
    cos: f64,
    src_cx: f64,
    src_cy: f64,
    dst_cx: f64,
    dst_cy: f64,
    fill: u8,
}

const EDGE_EPS: f64 = 1e-6;

impl<'a> Rotation<'a> {
    fn new(src: &'a GrayImage, angle_degrees: f64, fill: u8, dst_w: usize, dst_h: usize) -> Self {
        let (sin, cos) = angle_degrees.to_radians().sin_cos();
        Self {
            src,
            sin,
            cos,
            src_cx: (src.width as f64 - 1.0) * 0.5,
            src_cy: (src.height as f64 - 1.0) * 0.5,
            dst_cx: (dst_w as f64 - 1.0) * 0.5,
            dst_cy: (dst_h as f64 - 1.0) * 0.5,
            fill,
        }
    }

    #[inline]
    fn sample(&self, x: usize, y: usize) -> u8 {
        let dx = x as f64 - self.dst_cx;
        let dy = y as f64 - self.dst_cy;
        let sx = self.cos * dx + self.sin * dy + self.src_cx;
        let sy = -self.sin * dx + self.cos * dy + self.src_cy;
        bilinear(self.src, sx, sy).unwrap_or(self.fill)
    }
}

/// Bilinear sample at `(sx, sy)`, `None` outside the source lattice.
#[inline]
fn bilinear(img: &GrayImage, sx: f64, sy: f64) -> Option<u8> {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    if !(sx >= -EDGE_EPS && sy >= -EDGE_EPS && sx <= max_x + EDGE_EPS && sy <= max_y + EDGE_EPS) {
        return None;
    }
    let sx = sx.clamp(0.0, max_x);
    let sy = sy.clamp(0.0, max_y);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let p = |x: usize, y: usize| f64::from(img.get(x, y));
    let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
    let bottom = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
    let v = top + (bottom - top) * fy;
    Some((v + 0.5).floor().clamp(0.0, 255.0) as u8)
}

/// Rotates `img` about its centre onto a canvas large enough for the whole
/// footprint (see [`rotated_dims`]). Canvas pixels whose preimage falls
/// outside the source take `fill`.
pub fn rotate_about_center(img: &GrayImage, angle_degrees: f64, fill: u8) -> GrayImage {
    let (w, h) = rotated_dims(img.width, img.height, angle_degrees);
    let rot = Rotation::new(img, angle_degrees, fill, w, h);
    GrayImage::from_fn(w, h, |x, y| rot.sample(x, y))
}

fn crop_offsets(width: usize, height: usize, out_w: usize, out_h: usize) -> Result<(usize, usize)> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::EmptyImage);
    }
    if out_w > width || out_h > height {
        return Err(Error::CropTooLarge {
            out_w,
            out_h,
            width,
            height,
        });
    }
    // Odd margins drop the extra pixel on the right / bottom.
    Ok(((width - out_w) / 2, (height - out_h) / 2))
}

/// Centred `out_w`x`out_h` window.
pub fn center_crop(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    let (left, top) = crop_offsets(img.width, img.height, out_w, out_h)?;
    img.sub_image(left, top, out_w, out_h)
}

/// `center_crop(rotate_about_center(img, angle, fill), out_w, out_h)` without
/// materialising the full rotated canvas.
pub fn rotate_and_crop(
    img: &GrayImage,
    angle_degrees: f64,
    fill: u8,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage> {
    let (w, h) = rotated_dims(img.width, img.height, angle_degrees);
    let (left, top) = crop_offsets(w, h, out_w, out_h)?;
    let rot = Rotation::new(img, angle_degrees, fill, w, h);
    Ok(GrayImage::from_fn(out_w, out_h, |x, y| {
        rot.sample(left + x, top + y)
    }))
}
