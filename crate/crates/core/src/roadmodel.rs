//! Road profile extraction: dynamic-programming path through the
//! v-disparity histogram, then a RANSAC parabola fit to that path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::fit_quadratic;
use crate::model::QuadraticRoadModel;
use crate::vdisparity::VDisparityHistogram;

/// One row of the optimal path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub v: usize,
    pub d: f64,
}

/// Per-row disparity sequence selected by dynamic programming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPath {
    /// Entries ordered by increasing row; rows whose selected bin holds no
    /// votes are omitted.
    pub entries: Vec<PathEntry>,
    /// Objective value of the full bin assignment.
    pub energy: f64,
    /// Selected bin for every histogram row.
    pub bins: Vec<usize>,
}

impl OptimalPath {
    pub fn from_points(points: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let entries = points.into_iter().map(|(v, d)| PathEntry { v, d }).collect();
        Self { entries, energy: 0.0, bins: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Objective of a bin assignment: `Σ -count(v, b_v) + smoothness·Σ |b_v - b_{v+1}|`.
pub fn path_energy(hist: &VDisparityHistogram, bins: &[usize], smoothness: f64) -> f64 {
    let votes: f64 = bins.iter().enumerate().map(|(v, &b)| -(hist.count(v, b) as f64)).sum();
    let jumps: f64 = bins.windows(2).map(|w| w[0].abs_diff(w[1]) as f64).sum();
    votes + smoothness * jumps
}

/// Finds the bin sequence (one bin per row) minimizing [`path_energy`].
///
/// Rows are processed from the bottom of the image upward. The pairwise term
/// is an L1 penalty, so the minimization over the previous row is a linear
/// two-pass distance transform and the whole search costs `O(rows · bins)`.
pub fn extract_path_dp(hist: &VDisparityHistogram, smoothness: f64) -> Result<OptimalPath> {
    if !(smoothness >= 0.0) || !smoothness.is_finite() {
        return Err(Error::InvalidConfig(format!("smoothness must be non-negative, got {smoothness}")));
    }
    if hist.is_empty() {
        return Err(Error::EmptyInput("v-disparity histogram has no votes"));
    }
    let (rows, nb) = (hist.rows(), hist.bins());
    let mut acc: Vec<f64> = hist.row(rows - 1).iter().map(|&c| -(c as f64)).collect();
    let mut back = vec![0u32; (rows - 1) * nb];
    let mut best = vec![0.0; nb];
    let mut arg = vec![0u32; nb];

    for r in (0..rows - 1).rev() {
        for b in 0..nb {
            best[b] = acc[b];
            arg[b] = b as u32;
        }
        for b in 1..nb {
            let cand = best[b - 1] + smoothness;
            if cand < best[b] {
                best[b] = cand;
                arg[b] = arg[b - 1];
            }
        }
        for b in (0..nb - 1).rev() {
            let cand = best[b + 1] + smoothness;
            if cand < best[b] {
                best[b] = cand;
                arg[b] = arg[b + 1];
            }
        }
        let counts = hist.row(r);
        for b in 0..nb {
            acc[b] = best[b] - counts[b] as f64;
        }
        back[r * nb..(r + 1) * nb].copy_from_slice(&arg);
    }

    let mut b = 0;
    for (i, &e) in acc.iter().enumerate() {
        if e < acc[b] {
            b = i;
        }
    }
    let energy = acc[b];
    let mut bins = Vec::with_capacity(rows);
    bins.push(b);
    for r in 0..rows - 1 {
        b = back[r * nb + b] as usize;
        bins.push(b);
    }
    let entries = bins
        .iter()
        .enumerate()
        .filter(|&(v, &b)| hist.count(v, b) > 0)
        .map(|(v, &b)| PathEntry { v, d: hist.bin_center(b) })
        .collect();
    Ok(OptimalPath { entries, energy, bins })
}

/// RANSAC settings for the parabola fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    pub sample_size: usize,
    /// Inlier tolerance in disparity units.
    pub inlier_tol: f64,
    pub rng_seed: u64,
    /// Select the hypothesis with the smallest inlier ratio instead of the
    /// largest, as the original algorithm listing reads.
    pub select_smallest_eta: bool,
    /// Cap on outlier-removal refits.
    pub max_refinements: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            sample_size: 3,
            inlier_tol: 1.0,
            rng_seed: 0,
            select_smallest_eta: false,
            max_refinements: 100,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("RANSAC needs at least one iteration".into()));
        }
        if self.sample_size < 3 {
            return Err(Error::InvalidConfig(format!("sample size must be >= 3, got {}", self.sample_size)));
        }
        if !(self.inlier_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("inlier tolerance must be positive, got {}", self.inlier_tol)));
        }
        if self.max_refinements == 0 {
            return Err(Error::InvalidConfig("max_refinements must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of [`ransac_parabola`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacFit {
    pub model: QuadraticRoadModel,
    /// Inlier ratio of the hypothesis chosen from the sampling stage.
    pub selected_eta: f64,
    /// Per-entry inlier flags against the final model.
    pub inliers: Vec<bool>,
    /// Outliers removed by each refinement pass.
    pub outlier_history: Vec<usize>,
    /// False when refinement hit its cap or ran out of points.
    pub converged: bool,
    /// Degenerate samples that had to be redrawn.
    pub resamples: usize,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn classify(points: &[(f64, f64)], model: &QuadraticRoadModel, tol: f64) -> Vec<bool> {
    points.iter().map(|&(v, d)| (d - model.evaluate(v)).abs() <= tol).collect()
}

/// Fits `d(v)` to the path with RANSAC, then repeatedly drops outliers and
/// refits by least squares until a refit leaves no outliers.
pub fn ransac_parabola(path: &OptimalPath, cfg: &RansacConfig) -> Result<RansacFit> {
    cfg.validate()?;
    let n = path.entries.len();
    if n < cfg.sample_size {
        return Err(Error::InsufficientData { available: n, required: cfg.sample_size });
    }
    let points: Vec<(f64, f64)> = path.entries.iter().map(|e| (e.v as f64, e.d)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut hypotheses: Vec<(QuadraticRoadModel, f64)> = Vec::with_capacity(cfg.iterations);
    let mut resamples = 0;
    let budget = 10 * cfg.iterations;
    let mut sample = Vec::with_capacity(cfg.sample_size);
    while hypotheses.len() < cfg.iterations {
        sample.clear();
        sample.extend(rand::seq::index::sample(&mut rng, n, cfg.sample_size).iter().map(|i| points[i]));
        let model = match fit_quadratic(&sample) {
            Ok(fit) => fit.model(),
            Err(_) => {
                resamples += 1;
                if resamples > budget {
                    return Err(Error::DegenerateGeometry("RANSAC exhausted its resampling budget"));
                }
                continue;
            }
        };
        let inliers = classify(&points, &model, cfg.inlier_tol).iter().filter(|&&b| b).count();
        hypotheses.push((model, inliers as f64 / n as f64));
    }

    let mut chosen = 0;
    for (i, &(_, eta)) in hypotheses.iter().enumerate() {
        let better = if cfg.select_smallest_eta { eta < hypotheses[chosen].1 } else { eta > hypotheses[chosen].1 };
        if better {
            chosen = i;
        }
    }
    let (mut model, selected_eta) = hypotheses[chosen];

    let eta_of = |m: &QuadraticRoadModel| classify(&points, m, cfg.inlier_tol).iter().filter(|&&b| b).count();
    let mut best = (eta_of(&model), model);
    let mut current = points.clone();
    let mut outlier_history = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_refinements {
        let keep = classify(&current, &model, cfg.inlier_tol);
        let outliers = keep.iter().filter(|&&k| !k).count();
        outlier_history.push(outliers);
        current = current.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
        match fit_quadratic(&current) {
            Ok(fit) => model = fit.model(),
            Err(_) => break,
        }
        let score = eta_of(&model);
        if score > best.0 {
            best = (score, model);
        }
        if outliers == 0 {
            converged = true;
            break;
        }
    }
    if !converged {
        model = best.1;
    }

    Ok(RansacFit {
        model,
        selected_eta,
        inliers: classify(&points, &model, cfg.inlier_tol),
        outlier_history,
        converged,
        resamples,
    })
}
