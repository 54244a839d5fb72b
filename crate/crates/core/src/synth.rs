//! Synthetic ground-truth scenes and roll-accuracy sweeps.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DisparityImage, SegmentationMask};
use crate::model::QuadraticRoadModel;
use crate::rollest::{estimate_roll_gss, GssConfig};
use crate::rotation::{rotate_map, rotate_rel};

/// Rectangular region of the unrolled scene whose disparity is offset from the
/// road profile (negative: pothole, positive: obstacle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inset {
    pub u0: usize,
    pub v0: usize,
    pub width: usize,
    pub height: usize,
    pub offset: f64,
}

impl Inset {
    fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.u0 && u < self.u0 + self.width && v >= self.v0 && v < self.v0 + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// `κ·ω` with `ω ~ U[-1, 1]`.
    #[default]
    Uniform,
    /// Zero-mean Gaussian with standard deviation `κ/3`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Every pixel evaluates the road profile at its exact roll-corrected row.
    #[default]
    Exact,
    /// Rasterize the unrolled scene, then resample it with [`rotate_map`].
    Nearest,
}

/// Description of a synthetic disparity scene.
///
/// The unrolled scene holds `model(v)` on every pixel of row `v`, plus inset
/// offsets. The rolled map is that scene seen by a rig with roll `gamma`:
/// rotating it by `gamma` restores the unrolled scene, so roll estimation on it
/// should return `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub model: QuadraticRoadModel,
    pub gamma: f64,
    pub kappa: f64,
    pub seed: u64,
    pub insets: Vec<Inset>,
    pub noise: NoiseKind,
    pub sampling: Sampling,
    /// Round disparities to multiples of this step, mimicking a sub-pixel
    /// matcher.
    pub quantize: Option<f64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            model: QuadraticRoadModel { alpha0: 100.0, alpha1: 0.3, alpha2: 0.1 },
            gamma: 0.0,
            kappa: 0.0,
            seed: 0,
            insets: Vec::new(),
            noise: NoiseKind::Uniform,
            sampling: Sampling::Exact,
            quantize: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidConfig(format!(
                "synthetic raster must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidConfig(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidConfig("gamma must be finite".into()));
        }
        if let Some(q) = self.quantize {
            if !(q > 0.0) {
                return Err(Error::InvalidConfig(format!("quantize step must be positive, got {q}")));
            }
        }
        QuadraticRoadModel::new(self.model.alpha0, self.model.alpha1, self.model.alpha2)?;
        Ok(())
    }

    fn inset_offset(&self, u: usize, v: usize) -> Option<f64> {
        self.insets.iter().rev().find(|r| r.contains(u, v)).map(|r| r.offset)
    }
}

/// Rolled map together with its ground-truth road labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub map: DisparityImage,
    pub labels: SegmentationMask,
}

/// Builds the noiseless rolled map and its road labels.
pub fn generate_scene(spec: &SyntheticSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (cu, cv) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = spec.gamma.sin_cos();

    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    let mut road = vec![false; w * h];

    match spec.sampling {
        Sampling::Exact => {
            for y in 0..h {
                for x in 0..w {
                    let (su, sv) = rotate_rel(x as f64 - cu, y as f64 - cv, c, s);
                    let (su, sv) = (su + cu, sv + cv);
                    let (iu, iv) = (su.round(), sv.round());
                    if iu < 0.0 || iv < 0.0 || iu >= w as f64 || iv >= h as f64 {
                        continue;
                    }
                    let i = y * w + x;
                    let offset = spec.inset_offset(iu as usize, iv as usize);
                    values[i] = spec.model.evaluate(sv) + offset.unwrap_or(0.0);
                    valid[i] = true;
                    road[i] = offset.is_none();
                }
            }
        }
        Sampling::Nearest => {
            let mut flat = vec![0.0; w * h];
            let mut flat_road = vec![0.0; w * h];
            for v in 0..h {
                let d = spec.model.evaluate(v as f64);
                for u in 0..w {
                    let offset = spec.inset_offset(u, v);
                    flat[v * w + u] = d + offset.unwrap_or(0.0);
                    flat_road[v * w + u] = if offset.is_none() { 1.0 } else { 0.0 };
                }
            }
            let all = vec![true; w * h];
            let rolled = rotate_map(&DisparityImage::from_parts(w, h, flat, all.clone())?, -spec.gamma)?;
            let labels = rotate_map(&DisparityImage::from_parts(w, h, flat_road, all)?, -spec.gamma)?;
            values.copy_from_slice(rolled.values());
            valid.copy_from_slice(rolled.valid_mask());
            for (i, r) in road.iter_mut().enumerate() {
                *r = labels.valid_mask()[i] && labels.values()[i] == 1.0;
            }
        }
    }

    if let Some(q) = spec.quantize {
        for d in values.iter_mut() {
            *d = (*d / q).round() * q;
        }
    }
    Ok(Scene {
        map: DisparityImage::from_parts(w, h, values, valid)?,
        labels: SegmentationMask::new(w, h, road)?,
    })
}

/// Noiseless rolled ground-truth map.
pub fn generate_ground_truth(spec: &SyntheticSpec) -> Result<DisparityImage> {
    generate_scene(spec).map(|s| s.map)
}

/// Adds uniform noise `κ·ω`, `ω ~ U[-1, 1]`, to every valid pixel.
pub fn add_noise(map: &DisparityImage, kappa: f64, seed: u64) -> Result<DisparityImage> {
    add_noise_with(map, kappa, seed, NoiseKind::Uniform)
}

pub fn add_noise_with(map: &DisparityImage, kappa: f64, seed: u64, kind: NoiseKind) -> Result<DisparityImage> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidConfig(format!("kappa must be non-negative, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(map.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        NoiseKind::Uniform => map.map_valid(|_, _, d| d + kappa * rng.random_range(-1.0..=1.0)),
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, kappa / 3.0).expect("positive standard deviation");
            map.map_valid(|_, _, d| d + normal.sample(&mut rng))
        }
    }
}

/// Rolled map with the spec's noise applied.
pub fn render(spec: &SyntheticSpec) -> Result<DisparityImage> {
    let map = generate_ground_truth(spec)?;
    add_noise_with(&map, spec.kappa, spec.seed, spec.noise)
}

/// `count` angles evenly spaced over `[lo, hi]`, endpoints included.
pub fn uniform_angles(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// One angle of an accuracy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub gamma_true: f64,
    pub gamma_est: Option<f64>,
    /// `|gamma_true - gamma_est|`
    pub epsilon: Option<f64>,
    pub e_min: Option<f64>,
    pub evaluations: usize,
    pub elapsed_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub mean_error: f64,
    pub max_error: f64,
    pub failures: usize,
    pub elapsed_ms: f64,
}

impl SweepReport {
    fn from_records(records: Vec<SweepRecord>, elapsed_ms: f64) -> Self {
        let errors: Vec<f64> = records.iter().filter_map(|r| r.epsilon).collect();
        let failures = records.len() - errors.len();
        let mean_error = if errors.is_empty() { f64::NAN } else { errors.iter().sum::<f64>() / errors.len() as f64 };
        let max_error = errors.iter().cloned().fold(if errors.is_empty() { f64::NAN } else { 0.0 }, f64::max);
        Self { records, mean_error, max_error, failures, elapsed_ms }
    }

    pub fn mean_error_deg(&self) -> f64 {
        self.mean_error.to_degrees()
    }

    pub fn max_error_deg(&self) -> f64 {
        self.max_error.to_degrees()
    }

    /// Standard error of the mean of the per-angle errors.
    pub fn standard_error(&self) -> f64 {
        let errors: Vec<f64> = self.records.iter().filter_map(|r| r.epsilon).collect();
        let n = errors.len() as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        let var = errors.iter().map(|e| (e - self.mean_error).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    /// CSV with one line per angle, angles in radians and degrees.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma_true,gamma_est,epsilon,epsilon_deg,e_min,evaluations,elapsed_ms,error\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in &self.records {
            out.push_str(&format!(
                "{:.12e},{},{},{},{},{},{:.3},{}\n",
                r.gamma_true,
                opt(r.gamma_est),
                opt(r.epsilon),
                opt(r.epsilon.map(f64::to_degrees)),
                opt(r.e_min),
                r.evaluations,
                r.elapsed_ms,
                r.error.as_deref().unwrap_or("").replace(',', ";"),
            ));
        }
        out
    }
}

/// For every angle, renders `base_spec` rolled by that angle (noise seed
/// `base_spec.seed + index`), estimates the roll and records the error.
/// Failures are recorded per angle instead of aborting the sweep.
pub fn run_accuracy_sweep(base_spec: &SyntheticSpec, gammas: &[f64], gss_cfg: &GssConfig) -> Result<SweepReport> {
    if gammas.is_empty() {
        return Err(Error::EmptyInput("no sweep angles"));
    }
    base_spec.validate()?;
    gss_cfg.validate()?;
    let start = Instant::now();
    let records = gammas
        .par_iter()
        .enumerate()
        .map(|(i, &gamma_true)| {
            let t0 = Instant::now();
            let spec = SyntheticSpec { gamma: gamma_true, seed: base_spec.seed.wrapping_add(i as u64), ..base_spec.clone() };
            let outcome = render(&spec).and_then(|map| estimate_roll_gss(&map, gss_cfg));
            let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(est) => SweepRecord {
                    gamma_true,
                    gamma_est: Some(est.gamma),
                    epsilon: Some((gamma_true - est.gamma).abs()),
                    e_min: Some(est.e_min),
                    evaluations: est.evaluations,
                    elapsed_ms,
                    error: None,
                },
                Err(e) => SweepRecord {
                    gamma_true,
                    gamma_est: None,
                    epsilon: None,
                    e_min: None,
                    evaluations: 0,
                    elapsed_ms,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SweepReport::from_records(records, start.elapsed().as_secs_f64() * 1e3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollest::energy_at_gamma;

    fn small(gamma: f64) -> SyntheticSpec {
        SyntheticSpec { width: 64, height: 48, gamma, ..SyntheticSpec::default() }
    }

    #[test]
    fn unrolled_rows_follow_model() {
        let map = generate_ground_truth(&SyntheticSpec::default()).unwrap();
        assert_eq!((map.width(), map.height()), (640, 480));
        assert_eq!(map.valid_count(), 640 * 480);
        for u in [0, 100, 639] {
            assert_eq!(map.get(u, 0), Some(100.0));
            assert!((map.get(u, 10).unwrap() - 113.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rolled_map_is_flat_at_its_roll() {
        let map = generate_ground_truth(&small(0.2)).unwrap();
        let (e, model) = energy_at_gamma(&map, 0.2).unwrap();
        assert!(e <= 1e-6, "{e}");
        let absolute = model.shift_origin(23.5);
        assert!(absolute.max_abs_diff(&SyntheticSpec::default().model) < 1e-6, "{absolute:?}");
    }

    #[test]
    fn rolling_loses_corners() {
        let map = generate_ground_truth(&small(0.5)).unwrap();
        assert!(map.valid_count() < 64 * 48);
        assert!(map.is_valid(32, 24));
    }

    #[test]
    fn insets_offset_and_label() {
        let spec = SyntheticSpec {
            insets: vec![Inset { u0: 10, v0: 10, width: 5, height: 4, offset: -8.0 }],
            ..small(0.0)
        };
        let scene = generate_scene(&spec).unwrap();
        let m = spec.model;
        assert_eq!(scene.map.get(12, 11), Some(m.evaluate(11.0) - 8.0));
        assert!(!scene.labels.is_road(12, 11));
        assert!(scene.labels.is_road(20, 11));
        assert_eq!(scene.labels.road_count(), 64 * 48 - 20);
    }

    #[test]
    fn nearest_sampling_matches_rotate_map() {
        let spec = SyntheticSpec { sampling: Sampling::Nearest, ..small(0.0) };
        let exact = generate_ground_truth(&small(0.0)).unwrap();
        assert_eq!(generate_ground_truth(&spec).unwrap(), exact);
        let rolled = generate_ground_truth(&SyntheticSpec { gamma: 0.3, ..spec }).unwrap();
        assert_eq!(rolled.valid_mask(), generate_ground_truth(&small(0.3)).unwrap().valid_mask());
    }

    #[test]
    fn quantization_rounds() {
        let spec = SyntheticSpec { quantize: Some(0.25), ..small(0.1) };
        let map = generate_ground_truth(&spec).unwrap();
        assert!(map.iter_valid().all(|(_, _, d)| (d * 4.0).fract() == 0.0));
    }

    #[test]
    fn spec_validation() {
        assert!(generate_ground_truth(&SyntheticSpec { width: 4, ..small(0.0) }).is_err());
        assert!(generate_ground_truth(&SyntheticSpec { kappa: -1.0, ..small(0.0) }).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let map = generate_ground_truth(&small(0.1)).unwrap();
        assert_eq!(add_noise(&map, 0.0, 9).unwrap(), map);
    }

    #[test]
    fn uniform_noise_is_bounded_and_seeded() {
        let map = generate_ground_truth(&small(0.1)).unwrap();
        let a = add_noise(&map, 50.0, 9).unwrap();
        let b = add_noise(&map, 50.0, 9).unwrap();
        let c = add_noise(&map, 50.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.valid_mask(), map.valid_mask());
        let mut max = 0.0f64;
        for ((x, y), ok) in a.values().iter().zip(map.values()).zip(map.valid_mask()) {
            if *ok {
                max = max.max((x - y).abs());
            }
        }
        assert!(max <= 50.0 && max > 45.0, "{max}");
    }

    #[test]
    fn gaussian_noise_scale() {
        let map = DisparityImage::constant(100, 100, 0.0).unwrap();
        let n = add_noise_with(&map, 30.0, 1, NoiseKind::Gaussian).unwrap();
        let var = n.values().iter().map(|x| x * x).sum::<f64>() / 1e4;
        assert!((var.sqrt() - 10.0).abs() < 0.5, "{}", var.sqrt());
    }

    #[test]
    fn angle_grid() {
        let g = uniform_angles(65, -1.0, 1.0);
        assert_eq!(g.len(), 65);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[64], 1.0);
        assert_eq!(g[32], 0.0);
    }

    #[test]
    fn sweep_records_and_aggregates() {
        let cfg = GssConfig { tol: 1e-6, ..GssConfig::default() };
        let report = run_accuracy_sweep(&small(0.0), &[0.0, 0.2, -0.3], &cfg).unwrap();
        assert_eq!(report.records.len(), 3);
        assert_eq!(report.failures, 0);
        let eps: Vec<f64> = report.records.iter().map(|r| r.epsilon.unwrap()).collect();
        assert!((report.mean_error - eps.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert_eq!(report.max_error, eps.iter().cloned().fold(0.0, f64::max));
        assert!(report.records[0].epsilon.unwrap() <= cfg.tol);
        for r in &report.records {
            assert_eq!(r.epsilon, Some((r.gamma_true - r.gamma_est.unwrap()).abs()));
            assert!(r.epsilon.unwrap() <= 10.0 * cfg.tol);
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(run_accuracy_sweep(&small(0.0), &[], &cfg).is_err());
    }

    #[test]
    fn sweep_on_flat_scene() {
        // a constant road leaves the roll unidentifiable but never fails
        let spec = SyntheticSpec { model: QuadraticRoadModel::constant(5.0), ..small(0.0) };
        let report = run_accuracy_sweep(&spec, &[0.0, 0.4], &GssConfig::default()).unwrap();
        assert_eq!(report.failures, 0);
        assert!(report.records.iter().all(|r| r.e_min.unwrap() < 1e-9));
    }
}
