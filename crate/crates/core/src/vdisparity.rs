//! V-disparity histogram: each image row votes its valid disparities into
//! equal-width bins.

use crate::error::{Error, Result};
use crate::image::DisparityImage;

/// Per-row histogram of quantized disparity votes.
#[derive(Debug, Clone, PartialEq)]
pub struct VDisparityHistogram {
    rows: usize,
    bins: usize,
    bin_width: f64,
    d_min: f64,
    counts: Vec<u32>,
}

impl VDisparityHistogram {
    /// Wraps precomputed counts (row-major, `rows × bins`).
    pub fn from_counts(rows: usize, bins: usize, bin_width: f64, d_min: f64, counts: Vec<u32>) -> Result<Self> {
        if rows == 0 || bins == 0 {
            return Err(Error::EmptyInput("histogram has no rows or bins"));
        }
        if !(bin_width > 0.0) || !d_min.is_finite() {
            return Err(Error::InvalidConfig(format!("bin_width must be positive, got {bin_width}")));
        }
        if counts.len() != rows * bins {
            return Err(Error::Size { expected: rows * bins, actual: counts.len() });
        }
        Ok(Self { rows, bins, bin_width, d_min, counts })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn row(&self, v: usize) -> &[u32] {
        &self.counts[v * self.bins..(v + 1) * self.bins]
    }

    #[inline]
    pub fn count(&self, v: usize, bin: usize) -> u32 {
        self.counts[v * self.bins + bin]
    }

    /// Bin index for disparity `d`, clamped to the histogram.
    #[inline]
    pub fn bin_of(&self, d: f64) -> usize {
        let b = ((d - self.d_min) / self.bin_width).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.bins - 1)
        }
    }

    /// Disparity at the centre of `bin`.
    pub fn bin_center(&self, bin: usize) -> f64 {
        self.d_min + (bin as f64 + 0.5) * self.bin_width
    }

    /// Occupied bin span `(lowest, highest)` of row `v`, if any votes.
    pub fn row_span(&self, v: usize) -> Option<(usize, usize)> {
        let row = self.row(v);
        let lo = row.iter().position(|&c| c > 0)?;
        let hi = row.iter().rposition(|&c| c > 0)?;
        Some((lo, hi))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// Builds the v-disparity histogram of `map`. `d_min` is the smallest valid
/// disparity floored to a multiple of `bin_width`.
pub fn build_vdisparity(map: &DisparityImage, bin_width: f64) -> Result<VDisparityHistogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidConfig(format!("bin_width must be positive, got {bin_width}")));
    }
    let (lo, hi) = map
        .valid_range()
        .ok_or(Error::EmptyInput("no valid disparities"))?;
    let d_min = (lo / bin_width).floor() * bin_width;
    let bins = ((hi - d_min) / bin_width).floor() as usize + 1;
    let rows = map.height();
    let mut hist = VDisparityHistogram::from_counts(rows, bins, bin_width, d_min, vec![0; rows * bins])?;
    for (_, v, d) in map.iter_valid() {
        let b = hist.bin_of(d);
        hist.counts[v * bins + b] += 1;
    }
    Ok(hist)
}
