use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roadseg::synth::generate_scene;
use roadseg::SyntheticSpec;
use serde_json::Value;

fn roadseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadseg")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = roadseg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Minimal independent PFM parser: "Pf", dims, scale, bottom-up rows.
fn parse_pfm(bytes: &[u8]) -> (usize, usize, Vec<f32>) {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap().to_string());
        pos += 1;
    }
    assert_eq!(fields[0], "Pf");
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    let little = fields[3].parse::<f64>().unwrap() < 0.0;
    let data = &bytes[pos..];
    assert_eq!(data.len(), w * h * 4);
    let mut out = vec![0.0; w * h];
    for (i, c) in data.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        out[(h - 1 - i / w) * w + i % w] = x;
    }
    (w, h, out)
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn synth_default_is_640_by_480_and_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("default.pfm");
    ok(&["synth", "-o", s(&out), "--gamma", "0.3"]);
    let (w, h, values) = parse_pfm(&std::fs::read(&out).unwrap());
    assert_eq!((w, h), (640, 480));
    let spec = SyntheticSpec { gamma: 0.3, ..SyntheticSpec::default() };
    let expected = generate_scene(&spec).unwrap().map;
    for (i, &x) in values.iter().enumerate() {
        let want = if expected.valid_mask()[i] { expected.values()[i] as f32 } else { f32::INFINITY };
        assert_eq!(x, want);
    }
}

#[test]
fn synth_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let args = |out: &Path, seed: &str| {
        ok(&["synth", "-o", s(out), "--width", "64", "--height", "48", "--kappa", "5", "--noise-seed", seed]);
        std::fs::read(out).unwrap()
    };
    let a = args(&p("a.pfm"), "11");
    let b = args(&p("b.pfm"), "11");
    let c = args(&p("c.pfm"), "12");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("map.csv");
    ok(&["synth", "-o", s(&out), "--width", "40", "--height", "30", "--gamma", "-0.2", "--kappa", "2"]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().map(|l| l.split(',').map(|t| t.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 30);
    let spec = SyntheticSpec { width: 40, height: 30, gamma: -0.2, kappa: 2.0, ..SyntheticSpec::default() };
    let expected = roadseg::synth::render(&spec).unwrap();
    for (v, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 40);
        for (u, &d) in row.iter().enumerate() {
            // invalid pixels carry the zero marker
            assert_eq!(d, expected.get(u, v).unwrap_or(0.0));
        }
    }
}

fn pothole_scene(dir: &Path) -> (PathBuf, PathBuf, f64) {
    let gamma = 0.12;
    let map = dir.join("scene.pfm");
    let labels = dir.join("labels.png");
    ok(&[
        "synth", "-o", s(&map), "--labels", s(&labels), "--gamma", "0.12",
        "--alpha0", "-30", "--alpha1", "0.2", "--alpha2", "0.0001",
        "--inset", "260,330,120,70,-8",
    ]);
    (map, labels, gamma)
}

#[test]
fn segment_rolled_scene_with_pothole() {
    let dir = tempfile::tempdir().unwrap();
    let (map, labels, gamma) = pothole_scene(dir.path());
    let prefix = dir.path().join("out/seg");
    let stdout = ok(&["segment", s(&map), "-o", s(&prefix), "--diagnostics"]).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("gamma"));

    let report = json(&dir.path().join("out/seg_report.json"));
    assert_eq!(report["schema"], 1);
    let est = report["gamma"].as_f64().unwrap();
    assert!((est - gamma).abs() < 0.05f64.to_radians(), "{est}");
    for key in ["e_min", "delta", "threshold"] {
        assert!(report[key].is_number(), "{key}");
    }
    assert_eq!(report["alpha"].as_array().unwrap().len(), 3);
    assert!(report["timings_ms"]["total"].as_f64().unwrap() > 0.0);

    let mask = image::open(dir.path().join("out/seg_mask.png")).unwrap();
    assert_eq!(mask.color(), image::ColorType::L8);
    let mask = mask.to_luma8();
    let truth = image::open(&labels).unwrap().to_luma8();
    assert_eq!(mask.dimensions(), (640, 480));
    let agree = mask.pixels().zip(truth.pixels()).filter(|(a, b)| a == b).count();
    let acc = agree as f64 / (640.0 * 480.0);
    assert!(acc >= 0.99, "{acc}");

    let overlay = image::open(dir.path().join("out/seg_overlay.png")).unwrap();
    assert_eq!(overlay.color(), image::ColorType::Rgb8);

    let (w, h, trf) = parse_pfm(&std::fs::read(dir.path().join("out/seg_transformed.pfm")).unwrap());
    assert_eq!((w, h), (640, 480));
    let road_near_delta = mask
        .pixels()
        .zip(&trf)
        .filter(|(m, _)| m[0] == 255)
        .all(|(_, &d)| (d as f64 - 30.0).abs() <= 1.0);
    assert!(road_near_delta);

    let rle = json(&dir.path().join("out/seg_mask_rle.json"));
    let total: u64 = rle["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 640 * 480);
    for diag in ["seg_vdisparity.png", "seg_vdisparity.csv", "seg_path.csv", "seg_rotated.pfm"] {
        assert!(dir.path().join("out").join(diag).exists(), "{diag}");
    }
}

#[test]
fn flat_unrolled_scene() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("flat.csv");
    ok(&["synth", "-o", s(&map), "--width", "160", "--height", "120", "--alpha0", "20", "--alpha1", "0.1", "--alpha2", "0"]);
    let prefix = dir.path().join("flat");
    ok(&["segment", s(&map), "-o", s(&prefix)]);
    let report = json(&dir.path().join("flat_report.json"));
    let tol = std::f64::consts::PI / 1800.0;
    assert!(report["gamma"].as_f64().unwrap().abs() <= tol);
    assert_eq!(report["road_pixels"], 160 * 120);
}

#[test]
fn truncated_input_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("scene.pfm");
    ok(&["synth", "-o", s(&map), "--width", "64", "--height", "48"]);
    let bytes = std::fs::read(&map).unwrap();
    std::fs::write(&map, &bytes[..bytes.len() / 2]).unwrap();
    let before = files_in(dir.path());
    let out = roadseg(&["segment", s(&map), "-o", s(&dir.path().join("res"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
    assert_eq!(files_in(dir.path()), before);
}

#[test]
fn unsupported_or_missing_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("x.png");
    std::fs::write(&png, b"\x89PNG").unwrap();
    assert_eq!(roadseg(&["estimate-roll", s(&png)]).status.code(), Some(2));
    let missing = dir.path().join("missing.pfm");
    assert_eq!(roadseg(&["estimate-roll", s(&missing)]).status.code(), Some(2));
}

#[test]
fn degenerate_geometry_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("sparse.csv");
    std::fs::write(&map, "5,0,0\n0,0,7\n").unwrap();
    let out = roadseg(&["segment", s(&map), "-o", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("roll estimation"));
    assert_eq!(files_in(dir.path()).len(), 1);
}

#[test]
fn strict_mode_raises_non_convergence() {
    // a constant map has a flat roll energy
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("const.csv");
    let row = vec!["9"; 16].join(",");
    std::fs::write(&map, format!("{row}\n").repeat(12)).unwrap();
    assert_eq!(roadseg(&["estimate-roll", s(&map)]).status.code(), Some(0));
    assert_eq!(roadseg(&["estimate-roll", s(&map), "--strict"]).status.code(), Some(4));
    let cfg = dir.path().join("strict.toml");
    std::fs::write(&cfg, "strict = true\n").unwrap();
    assert_eq!(roadseg(&["estimate-roll", s(&map), "--config", s(&cfg)]).status.code(), Some(4));
    assert_eq!(roadseg(&["estimate-roll", s(&map), "--config", s(&cfg), "--strict", "false"]).status.code(), Some(0));
}

#[test]
fn estimate_roll_curve_matches_search() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.pfm");
    ok(&["synth", "-o", s(&map), "--width", "160", "--height", "120", "--gamma", "0.3"]);
    let curve = dir.path().join("curve.csv");
    let report = dir.path().join("roll.json");
    ok(&["estimate-roll", s(&map), "--curve", s(&curve), "--report", s(&report)]);
    let text = std::fs::read_to_string(&curve).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("gamma,energy"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (g, e) = l.split_once(',').unwrap();
            (g.parse().unwrap(), e.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 180);
    let best = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let r = json(&report);
    assert_eq!(r["schema"], 1);
    let step = std::f64::consts::PI / 180.0;
    assert!((r["gamma"].as_f64().unwrap() - best).abs() <= step);
    assert!((r["gamma"].as_f64().unwrap() - 0.3).abs() < 0.05f64.to_radians());
}

#[test]
fn pgm_input_with_scale() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.pgm");
    ok(&["synth", "-o", s(&map), "--width", "160", "--height", "120", "--gamma", "-0.2", "--alpha0", "20", "--alpha2", "0", "--pgm-scale", "256"]);
    let report = dir.path().join("r.json");
    ok(&["estimate-roll", s(&map), "--pgm-scale", "256", "--report", s(&report)]);
    let g = json(&report)["gamma"].as_f64().unwrap();
    assert!((g + 0.2).abs() < 0.05f64.to_radians(), "{g}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.csv");
    ok(&["synth", "-o", s(&map), "--width", "80", "--height", "60", "--alpha0", "20"]);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "delta = 12.0\notsu_bins = 64\n").unwrap();
    ok(&["segment", s(&map), "-o", s(&dir.path().join("a")), "--config", s(&cfg)]);
    ok(&["segment", s(&map), "-o", s(&dir.path().join("b")), "--config", s(&cfg), "--delta", "40"]);
    let a = json(&dir.path().join("a_report.json"));
    let b = json(&dir.path().join("b_report.json"));
    assert_eq!(a["delta"], 12.0);
    assert_eq!(b["delta"], 40.0);
    assert_eq!(b["config"]["otsu_bins"], 64);

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = roadseg(&["segment", s(&map), "-o", s(&dir.path().join("c")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("c_report.json").exists());
}

fn eval(dir: &Path, extra: &[&str]) -> Value {
    let report = dir.join("eval.json");
    let csv = dir.join("eval.csv");
    let mut args = vec!["eval", "--report", s(&report), "--csv", s(&csv)];
    args.extend_from_slice(extra);
    let out = ok(&args);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean eps"));
    let doc = json(&report);
    assert_eq!(doc["schema"], 1);
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, doc["report"]["records"].as_array().unwrap().len() + 1);
    doc
}

#[test]
fn eval_noiseless_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let doc = eval(dir.path(), &["--count", "65", "--tol", "1e-6"]);
    assert_eq!(doc["report"]["records"].as_array().unwrap().len(), 65);
    assert!(doc["max_error_deg"].as_f64().unwrap() <= 0.01);
    assert!(doc["mean_error_deg"].as_f64().unwrap() <= 0.001);
}

#[test]
fn eval_noisy_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let doc = eval(dir.path(), &["--count", "65", "--tol", "1e-6", "--kappa", "50"]);
    assert_eq!(doc["report"]["failures"], 0);
    assert!(doc["max_error_deg"].as_f64().unwrap() <= 0.05);
    assert!(doc["mean_error_deg"].as_f64().unwrap() <= 0.01);
}

#[test]
fn eval_single_unrotated_angle() {
    let dir = tempfile::tempdir().unwrap();
    let doc = eval(dir.path(), &["--count", "1", "--lo", "0", "--hi", "0", "--tol", "1e-6"]);
    assert!(doc["report"]["max_error"].as_f64().unwrap() <= 1e-6);
}
