//! Tunables shared by the subcommands. Every field can come from a flat TOML
//! file (`--config`) or a flag; flags win.

use std::path::Path;

use anyhow::Context;
use clap::Args;
use roadseg::{GssConfig, PipelineConfig, RansacConfig};
use serde::Deserialize;

use crate::formats::ReadOptions;

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    /// Golden section factor [default: 0.618]
    #[arg(long)]
    pub k: Option<f64>,
    /// Golden section termination width, radians [default: pi/1800]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Lower end of the roll search interval, radians [default: -pi/2]
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_lo: Option<f64>,
    /// Upper end of the roll search interval, radians [default: pi/2]
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_hi: Option<f64>,
    /// Coarse grid points before golden section search; 0 disables [default: 36]
    #[arg(long)]
    pub coarse_scan_steps: Option<usize>,
    /// v-disparity bin width [default: 1]
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Path smoothness penalty per bin of jump [default: 1]
    #[arg(long)]
    pub smoothness: Option<f64>,
    /// RANSAC hypotheses N [default: 20]
    #[arg(long)]
    pub ransac_iterations: Option<usize>,
    /// RANSAC sample size t [default: 3]
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// RANSAC inlier tolerance tau, disparity units [default: 1]
    #[arg(long)]
    pub inlier_tol: Option<f64>,
    /// RANSAC random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Choose the hypothesis with the smallest inlier ratio
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub smallest_eta: Option<bool>,
    /// Cap on refinement passes [default: 100]
    #[arg(long)]
    pub max_refinements: Option<usize>,
    /// Transformed road disparity delta [default: 30]
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Otsu histogram bins [default: 256]
    #[arg(long)]
    pub otsu_bins: Option<usize>,
    /// Refit the road model on road pixels [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub refine_pixels: Option<bool>,
    /// Pixel distance from the road model counted as road when refitting [default: 1]
    #[arg(long)]
    pub refine_tol: Option<f64>,
    /// Roll re-estimation rounds on road pixels [default: 2]
    #[arg(long)]
    pub robust_rounds: Option<usize>,
    /// Residual bound under which the whole map is road [default: 1]
    #[arg(long)]
    pub uniform_tol: Option<f64>,
    /// Threshold transformed disparities instead of residual magnitudes
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub one_sided: Option<bool>,
    /// Exit with status 4 when a convergence flag is raised
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Input value marking invalid pixels; non-finite values are always invalid [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub invalid_marker: Option<f64>,
    /// PGM samples are divided by this [default: 1]
    #[arg(long)]
    pub pgm_scale: Option<f64>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl Tuning {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn merged(mut self, flags: &Tuning) -> Tuning {
        overlay_fields!(self, flags;
            k, tol, gamma_lo, gamma_hi, coarse_scan_steps, bin_width, smoothness,
            ransac_iterations, sample_size, inlier_tol, seed, smallest_eta, max_refinements,
            delta, otsu_bins, refine_pixels, refine_tol, robust_rounds, uniform_tol,
            one_sided, strict, invalid_marker, pgm_scale);
        self
    }

    /// Config file (if any) overlaid with the flags.
    pub fn resolve(config: Option<&Path>, flags: &Tuning) -> anyhow::Result<Tuning> {
        let base = match config {
            Some(p) => Self::load(p)?,
            None => Tuning::default(),
        };
        Ok(base.merged(flags))
    }

    pub fn gss(&self) -> GssConfig {
        let d = GssConfig::default();
        GssConfig {
            gamma_lo: self.gamma_lo.unwrap_or(d.gamma_lo),
            gamma_hi: self.gamma_hi.unwrap_or(d.gamma_hi),
            tol: self.tol.unwrap_or(d.tol),
            k: self.k.unwrap_or(d.k),
            coarse_scan_steps: self.coarse_scan_steps.unwrap_or(d.coarse_scan_steps),
        }
    }

    pub fn ransac(&self) -> RansacConfig {
        let d = RansacConfig::default();
        RansacConfig {
            iterations: self.ransac_iterations.unwrap_or(d.iterations),
            sample_size: self.sample_size.unwrap_or(d.sample_size),
            inlier_tol: self.inlier_tol.unwrap_or(d.inlier_tol),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
            select_smallest_eta: self.smallest_eta.unwrap_or(d.select_smallest_eta),
            max_refinements: self.max_refinements.unwrap_or(d.max_refinements),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        PipelineConfig {
            gss: self.gss(),
            bin_width: self.bin_width.unwrap_or(d.bin_width),
            smoothness: self.smoothness.unwrap_or(d.smoothness),
            ransac: self.ransac(),
            delta: self.delta.unwrap_or(d.delta),
            otsu_bins: self.otsu_bins.unwrap_or(d.otsu_bins),
            refine_pixels: self.refine_pixels.unwrap_or(d.refine_pixels),
            refine_tol: self.refine_tol.unwrap_or(d.refine_tol),
            max_refinements: self.max_refinements.unwrap_or(d.max_refinements),
            uniform_tol: self.uniform_tol.unwrap_or(d.uniform_tol),
            one_sided_segmentation: self.one_sided.unwrap_or(d.one_sided_segmentation),
            robust_rounds: self.robust_rounds.unwrap_or(d.robust_rounds),
        }
    }

    pub fn read_options(&self) -> ReadOptions {
        let d = ReadOptions::default();
        ReadOptions {
            invalid_marker: self.invalid_marker.unwrap_or(d.invalid_marker),
            pgm_scale: self.pgm_scale.unwrap_or(d.pgm_scale),
        }
    }

    pub fn strict(&self) -> bool {
        self.strict.unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn defaults_match_library() {
        let t = Tuning::default();
        assert_eq!(t.pipeline(), PipelineConfig::default());
        let g = t.gss();
        assert_eq!((g.k, g.tol, g.coarse_scan_steps), (0.618, PI / 1800.0, 36));
        let r = t.ransac();
        assert_eq!((r.iterations, r.sample_size, r.inlier_tol), (20, 3, 1.0));
        let p = t.pipeline();
        assert_eq!((p.bin_width, p.smoothness, p.delta, p.otsu_bins), (1.0, 1.0, 30.0, 256));
    }

    #[test]
    fn flags_override_file() {
        let file = Tuning::from_toml("k = 0.5\ndelta = 12.0\nstrict = true\n").unwrap();
        let flags = Tuning { delta: Some(40.0), ..Tuning::default() };
        let t = file.merged(&flags);
        assert_eq!(t.k, Some(0.5));
        assert_eq!(t.delta, Some(40.0));
        assert!(t.strict());
        assert_eq!(t.pipeline().gss.k, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Tuning::from_toml("kk = 1.0").is_err());
        assert!(Tuning::from_toml("k = \"a\"").is_err());
    }
}
