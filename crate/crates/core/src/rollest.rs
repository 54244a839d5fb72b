//! Roll-angle estimation.
//!
//! For a candidate roll `γ`, every valid pixel is mapped to its rotated row
//! `v'` and a parabola `d ≈ α₀ + α₁v' + α₂v'²` is fitted by least squares. The
//! RMS residual of that fit is the energy `E(γ)`; the roll angle is its
//! minimizer over `(-π/2, π/2]`, found by golden section search. `E` has
//! period `π` because rotating by `γ + π` only negates `v'`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DisparityImage;
use crate::lsq::{NormalSums, QuadFit};
use crate::model::QuadraticRoadModel;

const CHUNK: usize = 4096;

/// Golden section search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GssConfig {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Termination width of the bracket (radians).
    pub tol: f64,
    /// Golden section factor.
    pub k: f64,
    /// Grid points of the exhaustive pre-scan; 0 runs bare golden section
    /// search over the whole interval.
    pub coarse_scan_steps: usize,
}

impl Default for GssConfig {
    fn default() -> Self {
        Self {
            gamma_lo: -FRAC_PI_2,
            gamma_hi: FRAC_PI_2,
            tol: PI / 1800.0,
            k: 0.618,
            coarse_scan_steps: 36,
        }
    }
}

impl GssConfig {
    /// Bare search without pre-bracketing.
    pub fn bare() -> Self {
        Self { coarse_scan_steps: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_lo < self.gamma_hi) || !self.gamma_lo.is_finite() || !self.gamma_hi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "search bracket must satisfy lo < hi, got ({}, {})",
                self.gamma_lo, self.gamma_hi
            )));
        }
        if !(self.k > 0.5 && self.k < 1.0) {
            return Err(Error::InvalidConfig(format!("golden section factor must be in (0.5, 1), got {}", self.k)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// Number of bracket shrinks needed to bring `width` below `tol`.
    pub fn expected_iterations(&self, width: f64) -> usize {
        let mut n = 0;
        let mut w = width;
        while w > self.tol {
            w *= self.k;
            n += 1;
        }
        n
    }

    /// True when the interval spans exactly one period of the energy.
    pub fn is_periodic(&self) -> bool {
        ((self.gamma_hi - self.gamma_lo) - PI).abs() < 1e-12
    }
}

/// Result of roll estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollEstimate {
    /// Estimated roll angle (radians).
    pub gamma: f64,
    /// Fitting energy at `gamma`.
    pub e_min: f64,
    /// Road model fitted at `gamma`, in centre-relative rotated rows `v'`.
    pub model: QuadraticRoadModel,
    /// Total energy evaluations, including pre-scan and bracket endpoints.
    pub evaluations: usize,
    /// Bracket shrinks performed by the golden section loop.
    pub iterations: usize,
    /// Set when every observed energy was identical, leaving `gamma`
    /// unidentifiable; `gamma` is then the final bracket midpoint.
    pub flat: bool,
    /// Every `(gamma, energy)` evaluated, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

/// Valid pixels of a map prepared for repeated energy evaluation.
#[derive(Debug, Clone)]
pub struct RollEnergy {
    /// centre-relative `(u - u_o, v - v_o, d)`
    points: Vec<[f64; 3]>,
    mean_x: f64,
    mean_y: f64,
    cxx: f64,
    cyy: f64,
    cxy: f64,
}

impl RollEnergy {
    pub fn new(map: &DisparityImage) -> Result<Self> {
        let (cu, cv) = map.center();
        let points: Vec<[f64; 3]> = map
            .iter_valid()
            .map(|(u, v, d)| [u as f64 - cu, v as f64 - cv, d])
            .collect();
        if points.len() < 3 {
            return Err(Error::Underdetermined { available: points.len(), required: 3 });
        }
        let n = points.len() as f64;
        let mean_x = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let mean_y = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
        for p in &points {
            let (dx, dy) = (p[0] - mean_x, p[1] - mean_y);
            cxx += dx * dx;
            cyy += dy * dy;
            cxy += dx * dy;
        }
        Ok(Self { points, mean_x, mean_y, cxx: cxx / n, cyy: cyy / n, cxy: cxy / n })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Least-squares fit at `gamma`, in the normalized rotated row.
    pub fn fit(&self, gamma: f64) -> Result<QuadFit> {
        let (s, c) = gamma.sin_cos();
        let mean = c * self.mean_y - s * self.mean_x;
        let var = c * c * self.cyy + s * s * self.cxx - 2.0 * c * s * self.cxy;
        if !(var > 1e-12 * (self.cxx + self.cyy)) {
            return Err(Error::DegenerateGeometry("all valid pixels fall on one rotated row"));
        }
        let scale = var.sqrt();
        let (cs, ss, ms) = (c / scale, s / scale, mean / scale);
        let sums = self
            .points
            .chunks(CHUNK)
            .map(|chunk| {
                let mut acc = NormalSums::default();
                for p in chunk {
                    acc.push(cs * p[1] - ss * p[0] - ms, p[2]);
                }
                acc
            })
            .fold(NormalSums::default(), |mut a, b| {
                a.merge(&b);
                a
            });
        QuadFit::from_sums(mean, scale, &sums)
    }

    /// Energy and centre-relative road model at `gamma`.
    pub fn evaluate(&self, gamma: f64) -> Result<(f64, QuadraticRoadModel)> {
        let fit = self.fit(gamma)?;
        let (s, c) = gamma.sin_cos();
        let (cs, ss, ms) = (c / fit.scale, s / fit.scale, fit.mean / fit.scale);
        let [b0, b1, b2] = fit.coeffs;
        let sse: f64 = self
            .points
            .chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|p| {
                        let t = cs * p[1] - ss * p[0] - ms;
                        let r = p[2] - (b0 + t * (b1 + t * b2));
                        r * r
                    })
                    .sum::<f64>()
            })
            .sum();
        Ok(((sse / self.points.len() as f64).sqrt(), fit.model()))
    }

    pub fn energy(&self, gamma: f64) -> Result<f64> {
        self.evaluate(gamma).map(|(e, _)| e)
    }
}

/// RMS residual of the best parabola in rotated rows at `gamma`, with that
/// parabola expressed in centre-relative rows `v'`.
pub fn energy_at_gamma(map: &DisparityImage, gamma: f64) -> Result<(f64, QuadraticRoadModel)> {
    RollEnergy::new(map)?.evaluate(gamma)
}

/// Evaluates the energy on `(-π/2, π/2]` every `step` radians, in increasing
/// angle order.
pub fn scan_energy_curve(map: &DisparityImage, step: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("scan step must be positive, got {step}")));
    }
    let energy = RollEnergy::new(map)?;
    scan_prepared(&energy, -FRAC_PI_2, FRAC_PI_2, step)
}

fn scan_prepared(energy: &RollEnergy, lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (1..=count)
        .into_par_iter()
        .map(|i| {
            let g = lo + i as f64 * step;
            energy.energy(g).map(|e| (g, e))
        })
        .collect()
}

/// Golden section search on an arbitrary objective.
///
/// Each iteration probes `γ₃ = kγ₁ + (1-k)γ₂` and `γ₄ = kγ₂ + (1-k)γ₁`; when
/// `E(γ₃) > E(γ₄)` the lower end moves to `γ₃`, otherwise the upper end moves
/// to `γ₄`. Runs while the bracket is wider than `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenSection {
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
    pub probes: Vec<(f64, f64)>,
}

pub fn golden_section<F>(f: F, mut lo: f64, mut hi: f64, tol: f64, k: f64) -> Result<GoldenSection>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut probes = Vec::new();
    let mut iterations = 0;
    while hi - lo > tol {
        let g3 = k * lo + (1.0 - k) * hi;
        let g4 = k * hi + (1.0 - k) * lo;
        let (e3, e4) = rayon::join(|| f(g3), || f(g4));
        let (e3, e4) = (e3?, e4?);
        probes.push((g3, e3));
        probes.push((g4, e4));
        if e3 > e4 {
            lo = g3;
        } else {
            hi = g4;
        }
        iterations += 1;
    }
    Ok(GoldenSection { lo, hi, iterations, probes })
}

/// Estimates the roll angle of `map` by golden section search on the fitting
/// energy, optionally preceded by a coarse exhaustive scan that brackets the
/// global minimum.
pub fn estimate_roll_gss(map: &DisparityImage, cfg: &GssConfig) -> Result<RollEstimate> {
    cfg.validate()?;
    let energy = RollEnergy::new(map)?;
    estimate_roll_prepared(&energy, cfg)
}

/// [`estimate_roll_gss`] on an already prepared energy.
pub fn estimate_roll_prepared(energy: &RollEnergy, cfg: &GssConfig) -> Result<RollEstimate> {
    cfg.validate()?;
    let (lo, hi) = (cfg.gamma_lo, cfg.gamma_hi);
    let mut trace = Vec::new();
    let mut evaluations = 0;

    // bracket endpoint energies are recorded for the trace only
    for g in [lo, hi] {
        evaluations += 1;
        if let Ok(e) = energy.energy(g) {
            trace.push((g, e));
        }
    }

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let (mut a, mut b) = (lo, hi);
    if cfg.coarse_scan_steps > 0 {
        let step = (hi - lo) / cfg.coarse_scan_steps as f64;
        let grid: Vec<(f64, f64)> = (1..=cfg.coarse_scan_steps)
            .into_par_iter()
            .map(|i| {
                let g = lo + i as f64 * step;
                energy.energy(g).map(|e| (g, e))
            })
            .collect::<Result<_>>()?;
        evaluations += grid.len();
        trace.extend_from_slice(&grid);
        let best = argmin(&grid).expect("non-empty grid");
        let centre = grid[best].0;
        a = centre - step;
        b = centre + step;
        if !cfg.is_periodic() {
            a = a.max(lo);
            b = b.min(hi);
        }
        candidates.extend_from_slice(&grid);
    }

    let gs = golden_section(|g| energy.energy(g), a, b, cfg.tol, cfg.k)?;
    evaluations += gs.probes.len();
    trace.extend_from_slice(&gs.probes);
    candidates.extend_from_slice(&gs.probes);

    let flat = is_flat(&candidates);
    let mut gamma = match argmin(&candidates) {
        Some(i) if !flat => candidates[i].0,
        _ => 0.5 * (gs.lo + gs.hi),
    };
    if cfg.is_periodic() {
        gamma = wrap_half_open(gamma, lo, hi);
    }
    let (e_min, model) = energy.evaluate(gamma)?;
    evaluations += 1;

    Ok(RollEstimate { gamma, e_min, model, evaluations, iterations: gs.iterations, flat, trace })
}

/// Index of the smallest energy; the first one wins ties.
fn argmin(samples: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(_, e)) in samples.iter().enumerate() {
        if best.map_or(true, |j| e < samples[j].1) {
            best = Some(i);
        }
    }
    best
}

fn is_flat(samples: &[(f64, f64)]) -> bool {
    if samples.len() < 2 {
        return false;
    }
    let (mn, mx) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, e)| (a.min(e), b.max(e)));
    mx - mn <= 1e-12 * mx.abs().max(1.0)
}

/// Maps `g` into `(lo, hi]` for an interval of width `π`.
fn wrap_half_open(mut g: f64, lo: f64, hi: f64) -> f64 {
    while g <= lo {
        g += PI;
    }
    while g > hi {
        g -= PI;
    }
    g
}
