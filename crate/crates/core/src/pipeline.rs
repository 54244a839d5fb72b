//! End-to-end segmentation: roll estimation, road profile fitting,
//! disparity transformation and thresholding.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::image::{DisparityImage, SegmentationMask};
use crate::lsq::fit_quadratic;
use crate::model::QuadraticRoadModel;
use crate::roadmodel::{extract_path_dp, ransac_parabola, OptimalPath, RansacConfig, RansacFit};
use crate::rollest::{estimate_roll_prepared, GssConfig, RollEnergy, RollEstimate};
use crate::rotation::{rotate_coords, rotate_map};
use crate::transform::{otsu_threshold, segment_road_one_sided, transform_map, DEFAULT_DELTA, DEFAULT_OTSU_BINS};
use crate::vdisparity::{build_vdisparity, VDisparityHistogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RollEstimation,
    Rotation,
    VDisparity,
    PathExtraction,
    Ransac,
    Refinement,
    Transformation,
    Segmentation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::RollEstimation => "roll estimation",
            Stage::Rotation => "rotation",
            Stage::VDisparity => "v-disparity",
            Stage::PathExtraction => "path extraction",
            Stage::Ransac => "RANSAC",
            Stage::Refinement => "model refinement",
            Stage::Transformation => "transformation",
            Stage::Segmentation => "segmentation",
        };
        f.write_str(name)
    }
}

/// Pipeline failure tagged with the stage that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub gss: GssConfig,
    /// v-disparity bin width (disparity units).
    pub bin_width: f64,
    /// DP penalty per bin of jump between adjacent rows.
    pub smoothness: f64,
    pub ransac: RansacConfig,
    pub delta: f64,
    pub otsu_bins: usize,
    /// Refit the road model on pixels within `refine_tol` of it, in
    /// continuous roll-corrected rows.
    pub refine_pixels: bool,
    pub refine_tol: f64,
    pub max_refinements: usize,
    /// When every residual is within this bound the whole valid area is road
    /// and thresholding is skipped.
    pub uniform_tol: f64,
    /// Threshold the transformed disparities one-sidedly instead of the
    /// residual magnitude.
    pub one_sided_segmentation: bool,
    /// Rounds of roll re-estimation restricted to pixels within `refine_tol`
    /// of the refined road model. Needs `refine_pixels`.
    pub robust_rounds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gss: GssConfig::default(),
            bin_width: 1.0,
            smoothness: 1.0,
            ransac: RansacConfig::default(),
            delta: DEFAULT_DELTA,
            otsu_bins: DEFAULT_OTSU_BINS,
            refine_pixels: true,
            refine_tol: 1.0,
            max_refinements: 100,
            uniform_tol: 1.0,
            one_sided_segmentation: false,
            robust_rounds: 2,
        }
    }
}

/// Wall-clock time spent per stage, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub roll_estimation: f64,
    pub rotation: f64,
    pub vdisparity: f64,
    pub path_extraction: f64,
    pub ransac: f64,
    pub refinement: f64,
    pub transformation: f64,
    pub segmentation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineStats {
    pub iterations: usize,
    pub inliers: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final roll estimate.
    pub roll: RollEstimate,
    /// Roll estimate over all valid pixels, before robust re-estimation.
    pub initial_roll: RollEstimate,
    /// Robust re-estimation rounds actually run.
    pub robust_rounds: usize,
    pub rotated: DisparityImage,
    pub histogram: VDisparityHistogram,
    pub path: OptimalPath,
    pub ransac: RansacFit,
    /// Road model in absolute rows of the roll-corrected frame.
    pub model: QuadraticRoadModel,
    pub refinement: Option<RefineStats>,
    pub transformed: DisparityImage,
    pub threshold: f64,
    pub mask: SegmentationMask,
    pub timings: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct RoadFit {
    rotated: DisparityImage,
    histogram: VDisparityHistogram,
    path: OptimalPath,
    ransac: RansacFit,
    model: QuadraticRoadModel,
    refinement: Option<RefineStats>,
}

fn fit_road(
    map: &DisparityImage,
    roll: &RollEstimate,
    cfg: &PipelineConfig,
    timings: &mut StageTimings,
) -> std::result::Result<RoadFit, StageError> {
    let t = Instant::now();
    let rotated = rotate_map(map, roll.gamma).at(Stage::Rotation)?;
    timings.rotation += ms(t);

    let t = Instant::now();
    let histogram = build_vdisparity(&rotated, cfg.bin_width).at(Stage::VDisparity)?;
    timings.vdisparity += ms(t);

    let t = Instant::now();
    let path = extract_path_dp(&histogram, cfg.smoothness).at(Stage::PathExtraction)?;
    timings.path_extraction += ms(t);

    let t = Instant::now();
    let ransac = ransac_parabola(&path, &cfg.ransac).at(Stage::Ransac)?;
    timings.ransac += ms(t);

    let t = Instant::now();
    let (_, cv) = map.center();
    let (model, refinement) = if cfg.refine_pixels {
        let global = roll.model.shift_origin(cv);
        let (m, stats) = refine_model(map, roll.gamma, &[ransac.model, global], cfg.refine_tol, cfg.max_refinements)
            .at(Stage::Refinement)?;
        (m, Some(stats))
    } else {
        (ransac.model, None)
    };
    timings.refinement += ms(t);
    Ok(RoadFit { rotated, histogram, path, ransac, model, refinement })
}

/// Pixels of `map` within `tol` of `model` at roll `gamma`.
fn road_inliers(map: &DisparityImage, gamma: f64, model: &QuadraticRoadModel, tol: f64) -> crate::error::Result<DisparityImage> {
    let (cu, cv) = map.center();
    let w = map.width();
    let valid = map
        .values()
        .iter()
        .zip(map.valid_mask())
        .enumerate()
        .map(|(i, (&d, &ok))| {
            let (_, vr) = rotate_coords((i % w) as f64, (i / w) as f64, cu, cv, gamma);
            ok && (d - model.evaluate(vr + cv)).abs() <= tol
        })
        .collect();
    DisparityImage::from_parts(w, map.height(), map.values().to_vec(), valid)
}

/// Runs every stage on `map`.
pub fn run_pipeline(map: &DisparityImage, cfg: &PipelineConfig) -> std::result::Result<PipelineOutput, StageError> {
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let energy = RollEnergy::new(map).at(Stage::RollEstimation)?;
    let initial_roll = estimate_roll_prepared(&energy, &cfg.gss).at(Stage::RollEstimation)?;
    timings.roll_estimation = ms(t);

    let mut roll = initial_roll.clone();
    let mut fit = fit_road(map, &roll, cfg, &mut timings)?;

    let mut robust_rounds = 0;
    if cfg.refine_pixels {
        let half_width = if cfg.gss.coarse_scan_steps > 0 {
            (cfg.gss.gamma_hi - cfg.gss.gamma_lo) / cfg.gss.coarse_scan_steps as f64
        } else {
            0.05
        };
        while robust_rounds < cfg.robust_rounds {
            let t = Instant::now();
            let inliers = road_inliers(map, roll.gamma, &fit.model, cfg.refine_tol).at(Stage::RollEstimation)?;
            if inliers.valid_count() == map.valid_count() {
                timings.roll_estimation += ms(t);
                break;
            }
            let (mut lo, mut hi) = (roll.gamma - half_width, roll.gamma + half_width);
            if !cfg.gss.is_periodic() {
                lo = lo.max(cfg.gss.gamma_lo);
                hi = hi.min(cfg.gss.gamma_hi);
            }
            let local = GssConfig { gamma_lo: lo, gamma_hi: hi, coarse_scan_steps: 0, ..cfg.gss };
            let next = RollEnergy::new(&inliers).and_then(|e| estimate_roll_prepared(&e, &local));
            timings.roll_estimation += ms(t);
            let Ok(mut next) = next else { break };
            if cfg.gss.is_periodic() && (next.gamma <= cfg.gss.gamma_lo || next.gamma > cfg.gss.gamma_hi) {
                // left the search interval; fold back using the half-turn symmetry
                let span = cfg.gss.gamma_hi - cfg.gss.gamma_lo;
                let folded = next.gamma - span * ((next.gamma - cfg.gss.gamma_lo) / span).ceil() + span;
                let Ok((e, m)) = RollEnergy::new(&inliers).and_then(|en| en.evaluate(folded)) else { break };
                next.gamma = folded;
                next.e_min = e;
                next.model = m;
            }
            robust_rounds += 1;
            let moved = (next.gamma - roll.gamma).abs();
            roll = next;
            fit = fit_road(map, &roll, cfg, &mut timings)?;
            if moved <= cfg.gss.tol {
                break;
            }
        }
    }
    let RoadFit { rotated, histogram, path, ransac, model, refinement } = fit;

    let t = Instant::now();
    let transformed = transform_map(map, &model, roll.gamma, cfg.delta).at(Stage::Transformation)?;
    timings.transformation = ms(t);

    let t = Instant::now();
    let (threshold, mask) = segment(&transformed, cfg).at(Stage::Segmentation)?;
    timings.segmentation = ms(t);
    timings.total = ms(start);

    Ok(PipelineOutput {
        roll,
        initial_roll,
        robust_rounds,
        rotated,
        histogram,
        path,
        ransac,
        model,
        refinement,
        transformed,
        threshold,
        mask,
        timings,
    })
}

fn segment(trf: &DisparityImage, cfg: &PipelineConfig) -> crate::error::Result<(f64, SegmentationMask)> {
    let residuals: Vec<f64> = trf.iter_valid().map(|(_, _, d)| (d - cfg.delta).abs()).collect();
    if residuals.is_empty() {
        return Err(Error::EmptyInput("transformed map has no valid pixels"));
    }
    if residuals.iter().all(|&r| r <= cfg.uniform_tol) {
        let road = trf.valid_mask().to_vec();
        return Ok((cfg.uniform_tol, SegmentationMask::new(trf.width(), trf.height(), road)?));
    }
    if cfg.one_sided_segmentation {
        let values = trf.valid_values();
        let threshold = otsu_threshold(&values, cfg.otsu_bins)?;
        return Ok((threshold, segment_road_one_sided(trf, cfg.delta, cfg.otsu_bins)?));
    }
    let threshold = otsu_threshold(&residuals, cfg.otsu_bins)?;
    let road = trf
        .values()
        .iter()
        .zip(trf.valid_mask())
        .map(|(&d, &ok)| ok && (d - cfg.delta).abs() <= threshold)
        .collect();
    Ok((threshold, SegmentationMask::new(trf.width(), trf.height(), road)?))
}

/// Pixel-level least-squares refinement of a road model.
///
/// Every valid pixel is placed at its continuous roll-corrected row. Starting
/// from the candidate with the most pixels within `tol`, the model is refitted
/// on those pixels until the inlier set stops changing.
pub fn refine_model(
    map: &DisparityImage,
    gamma: f64,
    candidates: &[QuadraticRoadModel],
    tol: f64,
    max_iterations: usize,
) -> crate::error::Result<(QuadraticRoadModel, RefineStats)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("refinement tolerance must be positive, got {tol}")));
    }
    let (cu, cv) = map.center();
    let points: Vec<(f64, f64)> = map
        .iter_valid()
        .map(|(u, v, d)| (rotate_coords(u as f64, v as f64, cu, cv, gamma).1 + cv, d))
        .collect();
    let inliers_of = |m: &QuadraticRoadModel| -> Vec<bool> {
        points.iter().map(|&(v, d)| (d - m.evaluate(v)).abs() <= tol).collect()
    };
    let count = |mask: &[bool]| mask.iter().filter(|&&b| b).count();

    let mut model = *candidates
        .iter()
        .max_by_key(|m| count(&inliers_of(m)))
        .ok_or(Error::EmptyInput("no candidate road model"))?;
    let mut mask = inliers_of(&model);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let selected: Vec<(f64, f64)> = points.iter().zip(&mask).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
        let Ok(fit) = fit_quadratic(&selected) else { break };
        iterations += 1;
        model = fit.model();
        let next = inliers_of(&model);
        if next == mask {
            converged = true;
            break;
        }
        mask = next;
    }
    Ok((model, RefineStats { iterations, inliers: count(&mask), converged }))
}
