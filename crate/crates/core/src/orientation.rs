//! Per-cell gradient orientation field.
//!
//! The image is tiled into non-overlapping `sigma`x`sigma` cells starting at
//! pixel (1, 1). For each cell the absolute central differences of its
//! interior pixels (the cell minus its 1-pixel border) are summed per axis,
//! and the resulting vector is normalised to unit length.
//!
//! Absolute sums lose the quadrant of the gradient, so each cell also keeps a
//! signed vertical accumulator: every pixel's gradient is first folded into
//! the right half-plane (negated when its x component is negative) and its y
//! component summed. The sign of that sum says whether the folded gradient
//! points up or down, which is what separates a +30 degree pattern from a
//! -30 degree one.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DEFAULT_SIGMA: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridParams {
    /// Pixels per cell side.
    pub sigma: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 4 {
            return Err(Error::InvalidParams(format!(
                "sigma must be at least 4, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

fn check_central(img: &GrayImage, x: usize, y: usize, horizontal: bool) -> Result<()> {
    let ok = if horizontal {
        x >= 1 && x + 1 < img.width() && y < img.height()
    } else {
        y >= 1 && y + 1 < img.height() && x < img.width()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::BorderPixel {
            x,
            y,
            width: img.width(),
            height: img.height(),
        })
    }
}

/// `img[y][x+1] - img[y][x-1]`
pub fn central_diff_x(img: &GrayImage, x: usize, y: usize) -> Result<i32> {
    check_central(img, x, y, true)?;
    Ok(i32::from(img.get(x + 1, y)) - i32::from(img.get(x - 1, y)))
}

/// `img[y+1][x] - img[y-1][x]`
pub fn central_diff_y(img: &GrayImage, x: usize, y: usize) -> Result<i32> {
    check_central(img, x, y, false)?;
    Ok(i32::from(img.get(x, y + 1)) - i32::from(img.get(x, y - 1)))
}

/// Integer gradient sums over one cell's interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellSums {
    /// Sum of `|dx|`.
    pub dx: i64,
    /// Sum of `|dy|`.
    pub dy: i64,
    /// Sum of `dy`, each pixel's gradient folded so that `dx >= 0`.
    pub dy_signed: i64,
}

impl CellSums {
    pub fn magnitude(&self) -> f64 {
        cell_magnitude(self.dx as f64, self.dy as f64)
    }
}

/// Sums over the `(sigma-2)^2` interior pixels of the cell whose top-left
/// pixel is `(row, col)`. The cell must sit at least one pixel inside the
/// image on every side.
pub fn cell_gradient_sums(
    img: &GrayImage,
    cell_origin: (usize, usize),
    params: GridParams,
) -> Result<CellSums> {
    params.validate()?;
    let (row, col) = cell_origin;
    let s = params.sigma;
    if row < 1 || col < 1 || row + s + 1 > img.height() || col + s + 1 > img.width() {
        return Err(Error::OutOfBounds(format!(
            "cell at pixel ({row}, {col}) with sigma {s} in {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(interior_sums(img, row, col, s))
}

#[inline]
fn interior_sums(img: &GrayImage, row: usize, col: usize, s: usize) -> CellSums {
    let w = img.width();
    let data = img.data();
    let mut sums = CellSums::default();
    for y in row + 1..row + s - 1 {
        let above = &data[(y - 1) * w..y * w];
        let here = &data[y * w..(y + 1) * w];
        let below = &data[(y + 1) * w..(y + 2) * w];
        for x in col + 1..col + s - 1 {
            let dx = i64::from(here[x + 1]) - i64::from(here[x - 1]);
            let dy = i64::from(below[x]) - i64::from(above[x]);
            sums.dx += dx.abs();
            sums.dy += dy.abs();
            sums.dy_signed += if dx < 0 { -dy } else { dy };
        }
    }
    sums
}

/// Euclidean length of the per-axis cell sums.
pub fn cell_magnitude(dx_cell: f64, dy_cell: f64) -> f64 {
    dy_cell.hypot(dx_cell)
}

/// Unit gradient vectors for every grid cell of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    sigma: usize,
    cells_x: usize,
    cells_y: usize,
    sums: Vec<CellSums>,
    unit_x: Vec<f64>,
    unit_y: Vec<f64>,
    sign_y: Vec<i8>,
    magnitude: Vec<f64>,
}

impl OrientationField {
    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn cells_x(&self) -> usize {
        self.cells_x
    }

    pub fn cells_y(&self) -> usize {
        self.cells_y
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        assert!(
            row < self.cells_y && col < self.cells_x,
            "cell out of field"
        );
        row * self.cells_x + col
    }

    pub fn sums(&self, row: usize, col: usize) -> CellSums {
        self.sums[self.idx(row, col)]
    }

    pub fn unit_x(&self, row: usize, col: usize) -> f64 {
        self.unit_x[self.idx(row, col)]
    }

    pub fn unit_y(&self, row: usize, col: usize) -> f64 {
        self.unit_y[self.idx(row, col)]
    }

    /// +1 or -1; flat cells report +1.
    pub fn sign_y(&self, row: usize, col: usize) -> i8 {
        self.sign_y[self.idx(row, col)]
    }

    pub fn magnitude(&self, row: usize, col: usize) -> f64 {
        self.magnitude[self.idx(row, col)]
    }

    /// Pixel coordinates `(row, col)` of a cell's top-left corner.
    pub fn cell_pixel_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (1 + row * self.sigma, 1 + col * self.sigma)
    }

    /// Builds a field from explicit per-cell values, bypassing the image.
    /// Meant for exercising patch-angle logic on hand-made fields.
    pub fn from_unit_vectors(
        sigma: usize,
        cells_x: usize,
        cells_y: usize,
        unit_x: Vec<f64>,
        unit_y: Vec<f64>,
        sign_y: Vec<i8>,
    ) -> Result<Self> {
        let n = cells_x * cells_y;
        if unit_x.len() != n || unit_y.len() != n || sign_y.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} cells per matrix"
            )));
        }
        let magnitude = unit_x
            .iter()
            .zip(&unit_y)
            .map(|(x, y)| x.hypot(*y))
            .collect();
        Ok(Self {
            sigma,
            cells_x,
            cells_y,
            sums: vec![CellSums::default(); n],
            unit_x,
            unit_y,
            sign_y,
            magnitude,
        })
    }

    /// Text dump: one line per cell row, tab separated `ux,uy,sign,mag`.
    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        for row in 0..self.cells_y {
            let line: Vec<String> = (0..self.cells_x)
                .map(|col| {
                    let i = self.idx(row, col);
                    format!(
                        "{:.6},{:.6},{},{:.3}",
                        self.unit_x[i], self.unit_y[i], self.sign_y[i], self.magnitude[i]
                    )
                })
                .collect();
            writeln!(out, "{}", line.join("\t"))?;
        }
        Ok(())
    }
}

pub fn build_orientation_field(img: &GrayImage, params: GridParams) -> Result<OrientationField> {
    params.validate()?;
    let s = params.sigma;
    if img.width() < s + 2 || img.height() < s + 2 {
        return Err(Error::OutOfBounds(format!(
            "{}x{} image is smaller than one {s}-pixel cell plus margin",
            img.width(),
            img.height()
        )));
    }
    let cells_x = (img.width() - 2) / s;
    let cells_y = (img.height() - 2) / s;

    let sums: Vec<CellSums> = (0..cells_y)
        .into_par_iter()
        .flat_map_iter(|r| (0..cells_x).map(move |c| interior_sums(img, 1 + r * s, 1 + c * s, s)))
        .collect();

    let n = sums.len();
    let mut unit_x = Vec::with_capacity(n);
    let mut unit_y = Vec::with_capacity(n);
    let mut sign_y = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    for cell in &sums {
        let mag = cell.magnitude();
        if mag > 0.0 {
            unit_x.push(cell.dx as f64 / mag);
            unit_y.push(cell.dy as f64 / mag);
        } else {
            unit_x.push(0.0);
            unit_y.push(0.0);
        }
        sign_y.push(if cell.dy_signed < 0 { -1 } else { 1 });
        magnitude.push(mag);
    }

    Ok(OrientationField {
        sigma: s,
        cells_x,
        cells_y,
        sums,
        unit_x,
        unit_y,
        sign_y,
        magnitude,
    })
}
