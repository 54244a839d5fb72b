//! 8-bit PNG diagnostics.

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, GrayImage, ImageEncoder, Rgb, RgbImage};
use roadseg::{DisparityImage, OptimalPath, SegmentationMask, VDisparityHistogram};

const VIOLET: [u8; 3] = [148, 0, 211];
const ALPHA: f64 = 0.5;

pub fn png_gray(img: &GrayImage) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)?;
    Ok(out)
}

pub fn png_rgb(img: &RgbImage) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)?;
    Ok(out)
}

/// Road 255, everything else 0.
pub fn mask_image(mask: &SegmentationMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |u, v| {
        image::Luma([if mask.is_road(u as usize, v as usize) { 255 } else { 0 }])
    })
}

/// Linear stretch of the valid range to 1..=255; invalid pixels are black.
pub fn grayscale(map: &DisparityImage) -> GrayImage {
    let (lo, hi) = map.valid_range().unwrap_or((0.0, 1.0));
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(map.width() as u32, map.height() as u32, |u, v| {
        let g = map.get(u as usize, v as usize).map_or(0, |d| (1.0 + 254.0 * (d - lo) / span).round() as u8);
        image::Luma([g])
    })
}

/// Road pixels blended with violet over the grayscale disparity.
pub fn overlay(map: &DisparityImage, mask: &SegmentationMask) -> RgbImage {
    let gray = grayscale(map);
    RgbImage::from_fn(map.width() as u32, map.height() as u32, |u, v| {
        let g = gray.get_pixel(u, v)[0];
        if mask.is_road(u as usize, v as usize) {
            Rgb(VIOLET.map(|c| (ALPHA * c as f64 + (1.0 - ALPHA) * g as f64).round() as u8))
        } else {
            Rgb([g; 3])
        }
    })
}

/// Histogram as a bins x rows image with log-scaled counts; the optimal path
/// is drawn in red when given.
pub fn vdisparity_image(hist: &VDisparityHistogram, path: Option<&OptimalPath>) -> RgbImage {
    let peak = hist.counts().iter().copied().max().unwrap_or(0) as f64;
    let norm = (1.0 + peak).ln().max(f64::MIN_POSITIVE);
    let mut img = RgbImage::from_fn(hist.bins() as u32, hist.rows() as u32, |b, v| {
        let c = hist.count(v as usize, b as usize) as f64;
        Rgb([(255.0 * (1.0 + c).ln() / norm).round() as u8; 3])
    });
    if let Some(path) = path {
        for e in &path.entries {
            img.put_pixel(path.bins[e.v] as u32, e.v as u32, Rgb([255, 0, 0]));
        }
    }
    img
}

/// Row-major counts, one row per image row.
pub fn vdisparity_csv(hist: &VDisparityHistogram) -> String {
    let mut out = String::new();
    for v in 0..hist.rows() {
        let row: Vec<String> = hist.row(v).iter().map(|c| c.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Alternating run lengths in row-major order, starting with non-road.
pub fn run_lengths(mask: &SegmentationMask) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &r in mask.road() {
        if r != current {
            runs.push(len);
            current = r;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}
