mod config;
mod formats;
mod output;
mod render;

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Parser, Subcommand, ValueEnum};
use roadseg::pipeline::StageError;
use roadseg::synth::{generate_scene, render as render_map, uniform_angles, Inset, NoiseKind, Sampling};
use roadseg::{
    estimate_roll_gss, run_accuracy_sweep, run_pipeline, scan_energy_curve, DisparityImage, Error,
    QuadraticRoadModel, SyntheticSpec,
};
use serde_json::json;

use config::Tuning;
use formats::{Format, FormatError};
use output::Outputs;

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "roadseg", version, about = "Roll estimation and road segmentation on dense disparity maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate roll, fit the road profile, transform and segment the road
    Segment(SegmentArgs),
    /// Estimate the roll angle only
    EstimateRoll(EstimateArgs),
    /// Render a synthetic rolled disparity map
    Synth(SynthArgs),
    /// Roll accuracy sweep over synthetic maps
    Eval(EvalArgs),
}

#[derive(clap::Args)]
struct SegmentArgs {
    /// Disparity map (.pfm, .pgm or .csv)
    input: PathBuf,
    /// Output prefix; files are named <prefix>_mask.png, <prefix>_report.json, ...
    #[arg(short, long)]
    output: PathBuf,
    /// Format of the transformed raster
    #[arg(long, default_value = "pfm")]
    raster_format: Format,
    /// Also write the v-disparity image and counts, the optimal path and the rotated map
    #[arg(long)]
    diagnostics: bool,
    /// Flat TOML file with tuning keys (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Disparity map (.pfm, .pgm or .csv)
    input: PathBuf,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump the energy curve sampled every --curve-step as CSV
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Curve sampling step, radians [default: pi/180]
    #[arg(long)]
    curve_step: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Uniform,
    Gaussian,
}

impl From<Noise> for NoiseKind {
    fn from(n: Noise) -> Self {
        match n {
            Noise::Uniform => NoiseKind::Uniform,
            Noise::Gaussian => NoiseKind::Gaussian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Exact,
    Nearest,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Exact => Sampling::Exact,
            SamplingArg::Nearest => Sampling::Nearest,
        }
    }
}

fn parse_inset(s: &str) -> Result<Inset, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err("expected u0,v0,width,height,offset".into());
    }
    let int = |i: usize| parts[i].parse::<usize>().map_err(|e| format!("{}: {e}", parts[i]));
    Ok(Inset {
        u0: int(0)?,
        v0: int(1)?,
        width: int(2)?,
        height: int(3)?,
        offset: parts[4].parse().map_err(|e| format!("{}: {e}", parts[4]))?,
    })
}

#[derive(clap::Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    #[arg(long, default_value_t = 100.0, allow_hyphen_values = true)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    alpha1: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    alpha2: f64,
    /// Noise amplitude kappa
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    noise: Noise,
    #[arg(long, value_enum, default_value = "exact")]
    sampling: SamplingArg,
    /// Round disparities to multiples of this step
    #[arg(long)]
    quantize: Option<f64>,
    /// Offset region of the unrolled scene: u0,v0,width,height,offset (repeatable)
    #[arg(long, value_parser = parse_inset, allow_hyphen_values = true)]
    inset: Vec<Inset>,
    /// Noise seed
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

impl SceneArgs {
    fn spec(&self, gamma: f64) -> SyntheticSpec {
        SyntheticSpec {
            width: self.width,
            height: self.height,
            model: QuadraticRoadModel { alpha0: self.alpha0, alpha1: self.alpha1, alpha2: self.alpha2 },
            gamma,
            kappa: self.kappa,
            seed: self.noise_seed,
            insets: self.inset.clone(),
            noise: self.noise.into(),
            sampling: self.sampling.into(),
            quantize: self.quantize,
        }
    }
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output raster (.pfm, .pgm or .csv)
    #[arg(short, long)]
    output: PathBuf,
    /// Roll angle, radians
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    gamma: f64,
    /// Also write the road labels as a PNG mask
    #[arg(long)]
    labels: Option<PathBuf>,
    /// PGM samples are disparities times this
    #[arg(long, default_value_t = 1.0)]
    pgm_scale: f64,
    #[command(flatten)]
    scene: SceneArgs,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Number of angles, endpoints included
    #[arg(long, default_value_t = 65)]
    count: usize,
    /// First angle, radians [default: -pi/4]
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    /// Last angle, radians [default: pi/4]
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// JSON report
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-angle CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

/// Configuration or input that could not be used.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_err(e: impl std::fmt::Display) -> anyhow::Error {
    InputError(e.to_string()).into()
}

fn library_code(e: &Error) -> u8 {
    match e {
        Error::DegenerateGeometry(_)
        | Error::DegenerateHistogram
        | Error::Underdetermined { .. }
        | Error::InsufficientData { .. } => 3,
        Error::Size { .. } | Error::EmptyInput(_) | Error::InvalidConfig(_) => 2,
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(s) = cause.downcast_ref::<StageError>() {
            return library_code(&s.source);
        }
        if let Some(s) = cause.downcast_ref::<Error>() {
            return library_code(s);
        }
        if cause.is::<FormatError>() || cause.is::<InputError>() {
            return 2;
        }
    }
    1
}

/// Outcome of a command that ran to completion.
struct Done {
    /// Convergence flags raised; fatal only in strict mode.
    flags: Vec<String>,
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::EstimateRoll(a) => cmd_estimate_roll(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(done) => {
            for f in &done.flags {
                eprintln!("warning: {f}");
            }
            if done.strict && !done.flags.is_empty() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_tuning(config: Option<&Path>, flags: &Tuning) -> anyhow::Result<Tuning> {
    Tuning::resolve(config, flags).map_err(|e| input_err(format!("{e:#}")))
}

fn read_input(path: &Path, tuning: &Tuning) -> anyhow::Result<DisparityImage> {
    Ok(formats::read(path, &tuning.read_options())?)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn cmd_segment(a: SegmentArgs) -> anyhow::Result<Done> {
    let tuning = load_tuning(a.config.as_deref(), &a.tuning)?;
    let cfg = tuning.pipeline();
    let map = read_input(&a.input, &tuning)?;
    let out = run_pipeline(&map, &cfg)?;
    let opts = tuning.read_options();

    let mut flags = Vec::new();
    if out.roll.flat {
        flags.push("roll energy is flat; roll angle is unidentifiable".to_string());
    }
    if !out.ransac.converged {
        flags.push("RANSAC refinement did not converge".to_string());
    }
    if out.refinement.as_ref().is_some_and(|r| !r.converged) {
        flags.push("pixel-level model refinement did not converge".to_string());
    }

    let mut files = Outputs::default();
    let name = |s: &str| with_suffix(&a.output, s);
    let mask_path = name("_mask.png");
    let raster_path = name(&format!("_transformed.{}", a.raster_format.extension()));
    let overlay_path = name("_overlay.png");
    let rle_path = name("_mask_rle.json");
    let report_path = name("_report.json");
    files.add(&mask_path, render::png_gray(&render::mask_image(&out.mask))?);
    files.add(&raster_path, formats::encode(&out.transformed, a.raster_format, &opts));
    files.add(&overlay_path, render::png_rgb(&render::overlay(&map, &out.mask))?);
    let rle = json!({
        "schema": SCHEMA,
        "width": out.mask.width(),
        "height": out.mask.height(),
        "order": "row-major",
        "first_run": "background",
        "counts": render::run_lengths(&out.mask),
    });
    files.add(&rle_path, serde_json::to_vec_pretty(&rle)?);
    if a.diagnostics {
        files.add(&name("_vdisparity.png"), render::png_rgb(&render::vdisparity_image(&out.histogram, Some(&out.path)))?);
        files.add(&name("_vdisparity.csv"), render::vdisparity_csv(&out.histogram).into_bytes());
        let mut path_csv = String::from("v,bin,d\n");
        for e in &out.path.entries {
            path_csv.push_str(&format!("{},{},{}\n", e.v, out.path.bins[e.v], e.d));
        }
        files.add(&name("_path.csv"), path_csv.into_bytes());
        files.add(&name(&format!("_rotated.{}", a.raster_format.extension())), formats::encode(&out.rotated, a.raster_format, &opts));
    }

    let m = out.model;
    let report = json!({
        "schema": SCHEMA,
        "input": a.input.display().to_string(),
        "width": map.width(),
        "height": map.height(),
        "valid_pixels": map.valid_count(),
        "gamma": out.roll.gamma,
        "gamma_deg": out.roll.gamma.to_degrees(),
        "e_min": out.roll.e_min,
        "alpha": [m.alpha0, m.alpha1, m.alpha2],
        "delta": cfg.delta,
        "threshold": out.threshold,
        "road_pixels": out.mask.road_count(),
        "roll": {
            "initial_gamma": out.initial_roll.gamma,
            "evaluations": out.roll.evaluations + out.initial_roll.evaluations,
            "iterations": out.initial_roll.iterations,
            "robust_rounds": out.robust_rounds,
            "flat": out.roll.flat,
        },
        "path_entries": out.path.len(),
        "ransac": {
            "alpha": [out.ransac.model.alpha0, out.ransac.model.alpha1, out.ransac.model.alpha2],
            "selected_eta": out.ransac.selected_eta,
            "inliers": out.ransac.inlier_count(),
            "converged": out.ransac.converged,
            "resamples": out.ransac.resamples,
        },
        "refinement": out.refinement,
        "flags": flags,
        "timings_ms": out.timings,
        "config": cfg,
        "outputs": files.paths(),
    });
    files.add(&report_path, serde_json::to_vec_pretty(&report)?);
    files.commit()?;

    println!(
        "gamma = {:.6} rad ({:.4} deg), road pixels {}/{}, report {}",
        out.roll.gamma,
        out.roll.gamma.to_degrees(),
        out.mask.road_count(),
        map.valid_count(),
        report_path.display()
    );
    Ok(Done { flags, strict: tuning.strict() })
}

fn cmd_estimate_roll(a: EstimateArgs) -> anyhow::Result<Done> {
    let tuning = load_tuning(a.config.as_deref(), &a.tuning)?;
    let gss = tuning.gss();
    let map = read_input(&a.input, &tuning)?;
    let est = estimate_roll_gss(&map, &gss)?;

    let mut files = Outputs::default();
    if let Some(path) = &a.curve {
        let step = a.curve_step.unwrap_or(PI / 180.0);
        if !(step > 0.0) || step > PI {
            return Err(input_err(format!("curve step must be in (0, pi], got {step}")));
        }
        let mut csv = String::from("gamma,energy\n");
        for (g, e) in scan_energy_curve(&map, step)? {
            csv.push_str(&format!("{g},{e}\n"));
        }
        files.add(path, csv.into_bytes());
    }
    let m = est.model;
    let report = json!({
        "schema": SCHEMA,
        "input": a.input.display().to_string(),
        "gamma": est.gamma,
        "gamma_deg": est.gamma.to_degrees(),
        "e_min": est.e_min,
        "alpha_centred": [m.alpha0, m.alpha1, m.alpha2],
        "evaluations": est.evaluations,
        "iterations": est.iterations,
        "flat": est.flat,
        "config": gss,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(p) => files.add(p, text.into_bytes()),
        None => println!("{text}"),
    }
    files.commit()?;
    let flags = if est.flat { vec!["roll energy is flat; roll angle is unidentifiable".to_string()] } else { Vec::new() };
    Ok(Done { flags, strict: tuning.strict() })
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<Done> {
    let format = Format::from_path(&a.output)?;
    let spec = a.scene.spec(a.gamma);
    spec.validate().map_err(input_err)?;
    let scene = generate_scene(&spec)?;
    let map = render_map(&spec)?;
    let opts = formats::ReadOptions { pgm_scale: a.pgm_scale, ..Default::default() };
    let mut files = Outputs::default();
    files.add(&a.output, formats::encode(&map, format, &opts));
    if let Some(p) = &a.labels {
        files.add(p, render::png_gray(&render::mask_image(&scene.labels))?);
    }
    files.commit()?;
    println!("wrote {}x{} map rolled by {} rad to {}", spec.width, spec.height, spec.gamma, a.output.display());
    Ok(Done { flags: Vec::new(), strict: false })
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<Done> {
    let tuning = load_tuning(a.config.as_deref(), &a.tuning)?;
    let gss = tuning.gss();
    if a.count == 0 {
        bail!(input_err("--count must be positive"));
    }
    let (lo, hi) = (a.lo.unwrap_or(-FRAC_PI_4), a.hi.unwrap_or(FRAC_PI_4));
    let gammas = uniform_angles(a.count, lo, hi);
    let base = a.scene.spec(0.0);
    base.validate().map_err(input_err)?;
    let report = run_accuracy_sweep(&base, &gammas, &gss)?;

    println!("{:>12} {:>14} {:>12} {:>12} {:>6} {:>9}", "gamma_deg", "estimate_deg", "eps_deg", "e_min", "evals", "ms");
    for r in &report.records {
        match (r.gamma_est, r.epsilon, r.e_min) {
            (Some(g), Some(eps), Some(e)) => println!(
                "{:>12.6} {:>14.6} {:>12.7} {:>12.4e} {:>6} {:>9.1}",
                r.gamma_true.to_degrees(),
                g.to_degrees(),
                eps.to_degrees(),
                e,
                r.evaluations,
                r.elapsed_ms
            ),
            _ => println!("{:>12.6} failed: {}", r.gamma_true.to_degrees(), r.error.as_deref().unwrap_or("unknown")),
        }
    }
    println!(
        "angles {}  failures {}  mean eps {:.7} deg  max eps {:.7} deg  ({:.3e} / {:.3e} rad)  {:.0} ms",
        report.records.len(),
        report.failures,
        report.mean_error_deg(),
        report.max_error_deg(),
        report.mean_error,
        report.max_error,
        report.elapsed_ms
    );

    let mut files = Outputs::default();
    if let Some(p) = &a.report {
        let doc = json!({
            "schema": SCHEMA,
            "scene": base,
            "gss": gss,
            "mean_error_deg": report.mean_error_deg(),
            "max_error_deg": report.max_error_deg(),
            "standard_error": report.standard_error(),
            "report": report,
        });
        files.add(p, serde_json::to_vec_pretty(&doc)?);
    }
    if let Some(p) = &a.csv {
        files.add(p, report.to_csv().into_bytes());
    }
    files.commit()?;
    if report.failures == report.records.len() {
        let first = report.records.first().and_then(|r| r.error.clone()).unwrap_or_default();
        bail!(InputError(format!("every angle failed: {first}")));
    }
    Ok(Done { flags: Vec::new(), strict: tuning.strict() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inset_parsing() {
        let i = parse_inset("1, 2,3,4,-8.5").unwrap();
        assert_eq!((i.u0, i.v0, i.width, i.height, i.offset), (1, 2, 3, 4, -8.5));
        assert!(parse_inset("1,2,3").is_err());
        assert!(parse_inset("1,2,3,x,0").is_err());
    }

    #[test]
    fn suffixes_keep_directory() {
        assert_eq!(with_suffix(Path::new("out/scene"), "_mask.png"), PathBuf::from("out/scene_mask.png"));
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let stage = StageError { stage: roadseg::pipeline::Stage::RollEstimation, source: Error::DegenerateGeometry("x") };
        assert_eq!(exit_code(&anyhow::Error::new(stage)), 3);
        assert_eq!(exit_code(&anyhow::Error::new(Error::EmptyInput("x"))), 2);
        assert_eq!(exit_code(&anyhow::Error::new(FormatError("bad".into())).context("reading")), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
