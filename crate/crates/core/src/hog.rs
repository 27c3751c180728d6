//! Histogram-of-oriented-gradients descriptor with block normalization.
//!
//! The descriptor is computed on a single-channel map; color images are
//! reduced with the max-channel luminance first. Local L2 normalization
//! makes the feature invariant to multiplicative lightness changes, which
//! is what makes it usable as a noise-sensitive, exposure-insensitive
//! representation.

use crate::error::{CoreError, Result};
use crate::image::{extract_illumination, Image, Map};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogConfig {
    /// Cell side in pixels. Map dimensions must be multiples of this.
    pub cell_size: usize,
    /// Number of unsigned orientation bins over `[0, π)`.
    pub bins: usize,
    /// Block side in cells.
    pub block_size: usize,
    /// Block stride in cells.
    pub block_stride: usize,
    /// Normalization floor: each block vector is divided by
    /// `sqrt(|v|² + norm_epsilon²)`.
    pub norm_epsilon: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell_size: 8,
            bins: 9,
            block_size: 2,
            block_stride: 1,
            norm_epsilon: 1e-6,
        }
    }
}

impl HogConfig {
    fn validate(&self) -> Result<()> {
        if self.cell_size == 0 || self.block_size == 0 || self.block_stride == 0 {
            return Err(CoreError::argument(
                "cell_size, block_size, and block_stride must be positive",
            ));
        }
        if self.bins < 2 {
            return Err(CoreError::argument("bins must be at least 2"));
        }
        if !(self.norm_epsilon > 0.0) {
            return Err(CoreError::argument("norm_epsilon must be positive"));
        }
        Ok(())
    }
}

/// Geometry of a flattened feature; two features can only be compared when
/// their layouts agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogLayout {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_size: usize,
    pub bins: usize,
}

impl HogLayout {
    pub fn len(&self) -> usize {
        self.blocks_x * self.blocks_y * self.block_size * self.block_size * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flattened block-normalized descriptor. Blocks are laid out row-major,
/// then cells within the block row-major, then bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HogFeature {
    pub values: Vec<f64>,
    pub layout: HogLayout,
}

/// Per-cell orientation histograms before any block grouping or
/// normalization; bin votes conserve gradient magnitude exactly.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
    /// `cells_y * cells_x * bins`, row-major cells then bins.
    pub data: Vec<f64>,
}

impl CellGrid {
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.data[start..start + self.bins]
    }
}

/// Central-difference gradient with clamped borders, magnitude-weighted
/// votes into the two nearest orientation bins (bin centers at `i·π/bins`,
/// wrapping modulo π).
pub fn cell_histograms(m: &Map, cfg: &HogConfig) -> Result<CellGrid> {
    cfg.validate()?;
    let (h, w) = (m.height(), m.width());
    if h == 0 || w == 0 || h % cfg.cell_size != 0 || w % cfg.cell_size != 0 {
        return Err(CoreError::argument(format!(
            "map {h}x{w} is not a nonzero multiple of cell_size {}",
            cfg.cell_size
        )));
    }
    let cells_x = w / cfg.cell_size;
    let cells_y = h / cfg.cell_size;
    let mut data = vec![0.0; cells_x * cells_y * cfg.bins];
    let bin_width = std::f64::consts::PI / cfg.bins as f64;

    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            let gx = (m.get(xp, y) - m.get(xm, y)) / 2.0;
            let gy = (m.get(x, yp) - m.get(x, ym)) / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += std::f64::consts::PI;
            }
            if theta >= std::f64::consts::PI {
                theta -= std::f64::consts::PI;
            }
            let pos = theta / bin_width;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as usize) % cfg.bins;
            let b1 = (b0 + 1) % cfg.bins;

            let cell = ((y / cfg.cell_size) * cells_x + x / cfg.cell_size) * cfg.bins;
            data[cell + b0] += mag * (1.0 - frac);
            data[cell + b1] += mag * frac;
        }
    }
    Ok(CellGrid {
        cells_x,
        cells_y,
        bins: cfg.bins,
        data,
    })
}

/// Expected feature length for a map of the given dimensions.
pub fn feature_len(height: usize, width: usize, cfg: &HogConfig) -> Result<usize> {
    Ok(layout_for(height, width, cfg)?.len())
}

fn layout_for(height: usize, width: usize, cfg: &HogConfig) -> Result<HogLayout> {
    cfg.validate()?;
    if height == 0 || width == 0 || height % cfg.cell_size != 0 || width % cfg.cell_size != 0 {
        return Err(CoreError::argument(format!(
            "map {height}x{width} is not a nonzero multiple of cell_size {}",
            cfg.cell_size
        )));
    }
    let cells_x = width / cfg.cell_size;
    let cells_y = height / cfg.cell_size;
    if cells_x < cfg.block_size || cells_y < cfg.block_size {
        return Err(CoreError::argument(format!(
            "{cells_y}x{cells_x} cells cannot hold a {0}x{0} block",
            cfg.block_size
        )));
    }
    Ok(HogLayout {
        blocks_x: (cells_x - cfg.block_size) / cfg.block_stride + 1,
        blocks_y: (cells_y - cfg.block_size) / cfg.block_stride + 1,
        block_size: cfg.block_size,
        bins: cfg.bins,
    })
}

/// Full descriptor: cell histograms grouped into overlapping blocks, each
/// block vector divided by `sqrt(|v|² + ε²)`.
pub fn compute_hog(m: &Map, cfg: &HogConfig) -> Result<HogFeature> {
    let layout = layout_for(m.height(), m.width(), cfg)?;
    let grid = cell_histograms(m, cfg)?;
    let mut values = Vec::with_capacity(layout.len());
    for by in 0..layout.blocks_y {
        for bx in 0..layout.blocks_x {
            let start = values.len();
            for cy in 0..cfg.block_size {
                for cx in 0..cfg.block_size {
                    let cell = grid.cell(bx * cfg.block_stride + cx, by * cfg.block_stride + cy);
                    values.extend_from_slice(cell);
                }
            }
            let norm_sq: f64 = values[start..].iter().map(|v| v * v).sum();
            let denom = (norm_sq + cfg.norm_epsilon * cfg.norm_epsilon).sqrt();
            for v in &mut values[start..] {
                *v /= denom;
            }
        }
    }
    Ok(HogFeature { values, layout })
}

/// Descriptor of a color image's max-channel luminance.
pub fn compute_hog_image(img: &Image, cfg: &HogConfig) -> Result<HogFeature> {
    compute_hog(&extract_illumination(img), cfg)
}

/// Mean absolute difference between two features with identical layouts.
pub fn hog_distance(a: &HogFeature, b: &HogFeature) -> Result<f64> {
    if a.layout != b.layout {
        return Err(CoreError::argument(format!(
            "feature layouts differ: {:?} vs {:?}",
            a.layout, b.layout
        )));
    }
    if a.values.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(total / a.values.len() as f64)
}
