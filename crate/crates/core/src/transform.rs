//! Disparity transformation and Otsu road segmentation.
//!
//! In the roll-corrected frame each disparity `d̃` at row `v` becomes
//! `d̃ - d(v) + δ`, so road pixels collapse to roughly `δ` while potholes and
//! obstacles keep their offset from the road profile.

use crate::error::{Error, Result};
use crate::image::{DisparityImage, SegmentationMask};
use crate::model::QuadraticRoadModel;
use crate::rotation::{rotate_coords, rotate_map};

/// Offset added to every transformed disparity.
pub const DEFAULT_DELTA: f64 = 30.0;
pub const DEFAULT_OTSU_BINS: usize = 256;

/// Transforms the ORIGINAL map `original` given roll `gamma` and the road
/// model `model` expressed in absolute rows of the roll-corrected frame.
///
/// Each valid pixel keeps its position; its roll-corrected row is computed
/// from its coordinates rather than by resampling, so no disparity is moved
/// between pixels:
///
/// ```text
/// v_rot = v_o + (v - v_o)·cos γ - (u - u_o)·sin γ
/// d_trf = d̃ - d(v_rot) + δ
/// ```
///
/// This equals rotating by `γ`, offsetting each row, and rotating back by
/// `-γ` without resampling loss. The validity mask is unchanged.
pub fn transform_map(original: &DisparityImage, model: &QuadraticRoadModel, gamma: f64, delta: f64) -> Result<DisparityImage> {
    let (cu, cv) = original.center();
    original.map_valid(|u, v, d| {
        let (_, vr) = rotate_coords(u as f64, v as f64, cu, cv, gamma);
        d - model.evaluate(vr + cv) + delta
    })
}

/// Transformation on an already rotated map, resampling twice: offsets every
/// valid disparity of `rotated` by `δ - d(v)` and rotates the result by
/// `-gamma` back into the original frame with [`rotate_map`].
pub fn transform_rotated_map(
    rotated: &DisparityImage,
    model: &QuadraticRoadModel,
    gamma: f64,
    delta: f64,
) -> Result<DisparityImage> {
    let updated = rotated.map_valid(|_, v, d| d - model.evaluate(v as f64) + delta)?;
    rotate_map(&updated, -gamma)
}

/// Otsu split of a value population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuSplit {
    /// Values `<= threshold` form the lower class.
    pub threshold: f64,
    /// Between-class variance `ω₀ω₁(μ₀ - μ₁)²` at the threshold.
    pub variance: f64,
}

/// Candidate thresholds: the interior edges of `bins` equal-width bins over
/// `[min, max]`.
pub fn bin_edges(min: f64, max: f64, bins: usize) -> impl Iterator<Item = f64> {
    let w = (max - min) / bins as f64;
    (1..bins).map(move |k| min + k as f64 * w)
}

/// Otsu's method restricted to bin-edge thresholds. Class means use the raw
/// values. Ties go to the lower threshold.
pub fn otsu_split(values: &[f64], bins: usize) -> Result<OtsuSplit> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!("Otsu needs at least 2 bins, got {bins}")));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to threshold"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidConfig("Otsu input must be finite".into()));
    }
    if min == max {
        return Err(Error::DegenerateHistogram);
    }
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in &sorted {
        acc += x;
        prefix.push(acc);
    }
    let n = sorted.len();
    let total = prefix[n];

    let mut best: Option<OtsuSplit> = None;
    for edge in bin_edges(min, max, bins) {
        let n0 = sorted.partition_point(|&x| x <= edge);
        if n0 == 0 || n0 == n {
            continue;
        }
        let (c0, c1) = (n0 as f64, (n - n0) as f64);
        let mu0 = prefix[n0] / c0;
        let mu1 = (total - prefix[n0]) / c1;
        let variance = (c0 / n as f64) * (c1 / n as f64) * (mu0 - mu1).powi(2);
        if best.map_or(true, |b| variance > b.variance) {
            best = Some(OtsuSplit { threshold: edge, variance });
        }
    }
    best.ok_or(Error::DegenerateHistogram)
}

/// Otsu threshold of `values` over `bins` equal-width bins.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<f64> {
    otsu_split(values, bins).map(|s| s.threshold)
}

/// Marks road where the residual `|d_trf - δ|` falls in Otsu's lower class.
/// Invalid pixels are never road.
pub fn segment_road(trf: &DisparityImage, delta: f64, bins: usize) -> Result<SegmentationMask> {
    let residuals: Vec<f64> = trf.iter_valid().map(|(_, _, d)| (d - delta).abs()).collect();
    if residuals.is_empty() {
        return Err(Error::EmptyInput("transformed map has no valid pixels"));
    }
    let threshold = otsu_threshold(&residuals, bins)?;
    mask_where(trf, |d| (d - delta).abs() <= threshold)
}

/// One-sided variant: Otsu on the transformed disparities themselves, road
/// being the class whose mean lies closer to `δ`.
pub fn segment_road_one_sided(trf: &DisparityImage, delta: f64, bins: usize) -> Result<SegmentationMask> {
    let values = trf.valid_values();
    if values.is_empty() {
        return Err(Error::EmptyInput("transformed map has no valid pixels"));
    }
    let threshold = otsu_threshold(&values, bins)?;
    let (mut lo, mut hi) = ((0.0, 0usize), (0.0, 0usize));
    for &x in &values {
        if x <= threshold {
            lo = (lo.0 + x, lo.1 + 1);
        } else {
            hi = (hi.0 + x, hi.1 + 1);
        }
    }
    let lower_is_road = (lo.0 / lo.1 as f64 - delta).abs() <= (hi.0 / hi.1 as f64 - delta).abs();
    mask_where(trf, |d| (d <= threshold) == lower_is_road)
}

fn mask_where(map: &DisparityImage, pred: impl Fn(f64) -> bool) -> Result<SegmentationMask> {
    let road = map
        .values()
        .iter()
        .zip(map.valid_mask())
        .map(|(&d, &ok)| ok && pred(d))
        .collect();
    SegmentationMask::new(map.width(), map.height(), road)
}
