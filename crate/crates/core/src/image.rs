//! Raster types shared by every stage.
//!
//! Coordinates follow the disparity-map convention: `u` is the column index
//! (rightward), `v` the row index (downward). Rotations are taken about the
//! geometric centre `((W-1)/2, (H-1)/2)`.

use crate::error::{Error, Result};

/// Dense disparity map with an explicit validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityImage {
    /// Builds a map from row-major values. Entries equal to `invalid_marker`
    /// or non-finite are flagged invalid.
    pub fn new(width: usize, height: usize, values: Vec<f64>, invalid_marker: f64) -> Result<Self> {
        let valid = values
            .iter()
            .map(|&d| d.is_finite() && d != invalid_marker)
            .collect();
        Self::from_parts(width, height, values, valid)
    }

    /// Builds a map from values and an explicit mask. Non-finite values are
    /// always invalid regardless of the mask.
    pub fn from_parts(width: usize, height: usize, values: Vec<f64>, mut valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput("disparity map has zero width or height"));
        }
        let expected = width * height;
        if values.len() != expected {
            return Err(Error::Size { expected, actual: values.len() });
        }
        if valid.len() != expected {
            return Err(Error::Size { expected, actual: valid.len() });
        }
        let mut values = values;
        for (ok, d) in valid.iter_mut().zip(values.iter_mut()) {
            *ok &= d.is_finite();
            if !*ok {
                *d = 0.0;
            }
        }
        Ok(Self { width, height, values, valid })
    }

    /// A fully valid map holding `value` everywhere.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_parts(width, height, vec![value; width * height], vec![true; width * height])
    }

    /// A map with every pixel invalid.
    pub fn invalid(width: usize, height: usize) -> Result<Self> {
        Self::from_parts(width, height, vec![0.0; width * height], vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raster centre `(u_o, v_o)`.
    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Disparity at `(u, v)`, or `None` when the pixel is invalid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = self.index(u, v);
        self.valid[i].then_some(self.values[i])
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[self.index(u, v)]
    }

    /// Row-major values; invalid entries read as 0.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&ok| ok).count()
    }

    /// Iterates `(u, v, d)` over valid pixels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(move |(i, (&d, _))| (i % w, i / w, d))
    }

    /// Valid disparities in row-major order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.iter_valid().map(|(_, _, d)| d).collect()
    }

    /// Applies `f(u, v, d)` to every valid pixel, keeping the mask.
    pub fn map_valid(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        let w = self.width;
        let values = self
            .values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .map(|(i, (&d, &ok))| if ok { f(i % w, i / w, d) } else { d })
            .collect();
        Self::from_parts(self.width, self.height, values, self.valid.clone())
    }

    /// Minimum and maximum valid disparity.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.iter_valid().fold(None, |acc, (_, _, d)| match acc {
            None => Some((d, d)),
            Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
        })
    }
}

/// Binary road mask aligned with a disparity map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    road: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, road: Vec<bool>) -> Result<Self> {
        let expected = width * height;
        if road.len() != expected {
            return Err(Error::Size { expected, actual: road.len() });
        }
        Ok(Self { width, height, road })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_road(&self, u: usize, v: usize) -> bool {
        self.road[v * self.width + u]
    }

    pub fn road(&self) -> &[bool] {
        &self.road
    }

    pub fn road_count(&self) -> usize {
        self.road.iter().filter(|&&r| r).count()
    }

    /// Fraction of pixels where `self` agrees with `labels`, counted only
    /// where `considered` is true. Returns `None` if nothing is considered or
    /// the dimensions differ.
    pub fn accuracy(&self, labels: &SegmentationMask, considered: &[bool]) -> Option<f64> {
        if labels.width != self.width || labels.height != self.height || considered.len() != self.road.len() {
            return None;
        }
        let (mut total, mut agree) = (0usize, 0usize);
        for ((&a, &b), &c) in self.road.iter().zip(&labels.road).zip(considered) {
            if c {
                total += 1;
                agree += usize::from(a == b);
            }
        }
        (total > 0).then(|| agree as f64 / total as f64)
    }
}
