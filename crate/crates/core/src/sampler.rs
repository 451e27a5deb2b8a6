//! Differentiable affine warping: grid generation and bilinear sampling with
//! analytic gradients for the source image and the affine entries.
//!
//! Normalized coordinates put −1 and +1 on the centers of the edge pixels:
//! column `j` of a `W`-wide image sits at `u = 2j/(W−1) − 1`. Reads outside
//! the image contribute zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AffineMatrix;

/// Channel-planar raster: value `(c, i, j)` lives at `c·H·W + i·W + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 || channels == 0 {
            return Err(Error::Shape(format!(
                "image must be at least 2x2 with one channel, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels: 1,
            data: vec![value; height * width],
        }
    }

    /// Single-channel image from a pixel function `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            channels: 1,
            data,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-output-pixel source coordinates in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub height: usize,
    pub width: usize,
    /// `(x, y)` per output pixel, row-major.
    pub coords: Vec<[f64; 2]>,
}

#[inline]
pub fn normalized_coord(index: usize, extent: usize) -> f64 {
    2.0 * index as f64 / (extent - 1) as f64 - 1.0
}

pub fn affine_grid(a: &AffineMatrix, height: usize, width: usize) -> SampleGrid {
    assert!(height >= 2 && width >= 2, "grid needs at least 2x2 pixels");
    let m = &a.0;
    let mut coords = Vec::with_capacity(height * width);
    for i in 0..height {
        let v = normalized_coord(i, height);
        for j in 0..width {
            let u = normalized_coord(j, width);
            coords.push([m[0][0] * u + m[0][1] * v + m[0][2], m[1][0] * u + m[1][1] * v + m[1][2]]);
        }
    }
    SampleGrid { height, width, coords }
}

/// Bilinear stencil of one sample: top-left source pixel and fractional offsets.
#[derive(Clone, Copy)]
struct Stencil {
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
}

#[inline]
fn stencil(coord: [f64; 2], height: usize, width: usize) -> Stencil {
    let px = (coord[0] + 1.0) * (width - 1) as f64 / 2.0;
    let py = (coord[1] + 1.0) * (height - 1) as f64 / 2.0;
    let fx0 = px.floor();
    let fy0 = py.floor();
    Stencil {
        x0: fx0 as isize,
        y0: fy0 as isize,
        fx: px - fx0,
        fy: py - fy0,
    }
}

#[inline]
fn read(img: &Image, c: usize, y: isize, x: isize) -> f64 {
    if y < 0 || x < 0 || y >= img.height as isize || x >= img.width as isize {
        0.0
    } else {
        img.get(c, y as usize, x as usize)
    }
}

/// Zero-border bilinear sampling of `img` at every grid location.
pub fn bilinear_sample(img: &Image, grid: &SampleGrid) -> Image {
    let (h, w) = (grid.height, grid.width);
    let mut out = Image::zeros(h, w, img.channels);
    for (p, &coord) in grid.coords.iter().enumerate() {
        if !coord[0].is_finite() || !coord[1].is_finite() {
            continue;
        }
        let s = stencil(coord, img.height, img.width);
        let (w00, w01) = ((1.0 - s.fy) * (1.0 - s.fx), (1.0 - s.fy) * s.fx);
        let (w10, w11) = (s.fy * (1.0 - s.fx), s.fy * s.fx);
        for c in 0..img.channels {
            let v = w00 * read(img, c, s.y0, s.x0)
                + w01 * read(img, c, s.y0, s.x0 + 1)
                + w10 * read(img, c, s.y0 + 1, s.x0)
                + w11 * read(img, c, s.y0 + 1, s.x0 + 1);
            out.data[c * h * w + p] = v;
        }
    }
    out
}

/// Checked variant of [`bilinear_sample`] for callers that build the grid
/// themselves.
pub fn try_bilinear_sample(img: &Image, grid: &SampleGrid) -> Result<Image> {
    if grid.coords.len() != grid.height * grid.width || grid.height < 2 || grid.width < 2 {
        return Err(Error::Shape(format!(
            "grid of {} coordinates does not match {}x{}",
            grid.coords.len(),
            grid.height,
            grid.width
        )));
    }
    Ok(bilinear_sample(img, grid))
}

pub fn warp(img: &Image, a: &AffineMatrix) -> Image {
    bilinear_sample(img, &affine_grid(a, img.height, img.width))
}

#[derive(Debug, Clone)]
pub struct WarpGradients {
    pub image: Image,
    /// d/d(x, y) per output pixel, in normalized units.
    pub grid: Vec<[f64; 2]>,
    /// d/d(a1..a6), assuming the grid came from [`affine_grid`].
    pub affine: [f64; 6],
}

/// Analytic gradients of `Σ upstream · bilinear_sample(img, grid)`.
///
/// At integer source coordinates the derivative is the right-sided limit.
pub fn warp_backward(img: &Image, grid: &SampleGrid, upstream: &Image) -> Result<WarpGradients> {
    let (h, w) = (grid.height, grid.width);
    if upstream.height != h || upstream.width != w || upstream.channels != img.channels {
        return Err(Error::Shape(format!(
            "upstream {}x{}x{} vs grid {h}x{w} with {} channels",
            upstream.height, upstream.width, upstream.channels, img.channels
        )));
    }
    let mut grad_img = Image::zeros(img.height, img.width, img.channels);
    let mut grad_grid = vec![[0.0; 2]; h * w];
    let sx = (img.width - 1) as f64 / 2.0;
    let sy = (img.height - 1) as f64 / 2.0;
    let (ih, iw) = (img.height as isize, img.width as isize);

    for (p, &coord) in grid.coords.iter().enumerate() {
        if !coord[0].is_finite() || !coord[1].is_finite() {
            continue;
        }
        let s = stencil(coord, img.height, img.width);
        let corners = [
            (s.y0, s.x0, (1.0 - s.fy) * (1.0 - s.fx)),
            (s.y0, s.x0 + 1, (1.0 - s.fy) * s.fx),
            (s.y0 + 1, s.x0, s.fy * (1.0 - s.fx)),
            (s.y0 + 1, s.x0 + 1, s.fy * s.fx),
        ];
        let mut dx = 0.0;
        let mut dy = 0.0;
        for c in 0..img.channels {
            let g = upstream.data[c * h * w + p];
            if g == 0.0 {
                continue;
            }
            for &(y, x, weight) in &corners {
                if y >= 0 && x >= 0 && y < ih && x < iw {
                    grad_img.data[(c * img.height + y as usize) * img.width + x as usize] += g * weight;
                }
            }
            let v00 = read(img, c, s.y0, s.x0);
            let v01 = read(img, c, s.y0, s.x0 + 1);
            let v10 = read(img, c, s.y0 + 1, s.x0);
            let v11 = read(img, c, s.y0 + 1, s.x0 + 1);
            dx += g * ((1.0 - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
            dy += g * ((1.0 - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
        }
        grad_grid[p] = [dx * sx, dy * sy];
    }

    let mut grad_affine = [0.0; 6];
    for i in 0..h {
        let v = normalized_coord(i, h);
        for j in 0..w {
            let u = normalized_coord(j, w);
            let [gx, gy] = grad_grid[i * w + j];
            grad_affine[0] += gx * u;
            grad_affine[1] += gx * v;
            grad_affine[2] += gx;
            grad_affine[3] += gy * u;
            grad_affine[4] += gy * v;
            grad_affine[5] += gy;
        }
    }

    Ok(WarpGradients {
        image: grad_img,
        grid: grad_grid,
        affine: grad_affine,
    })
}
