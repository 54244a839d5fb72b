//! Roll rotation of pixel coordinates and of whole disparity rasters.

use rayon::prelude::*;

use crate::error::Result;
use crate::image::DisparityImage;

/// Rotates `(u, v)` about `(center_u, center_v)` by `gamma`, returning
/// centre-relative coordinates `(u', v')`:
///
/// ```text
/// u' = (u - u_o)·cos γ + (v - v_o)·sin γ
/// v' = (v - v_o)·cos γ - (u - u_o)·sin γ
/// ```
#[inline]
pub fn rotate_coords(u: f64, v: f64, center_u: f64, center_v: f64, gamma: f64) -> (f64, f64) {
    let (s, c) = gamma.sin_cos();
    rotate_rel(u - center_u, v - center_v, c, s)
}

#[inline]
pub(crate) fn rotate_rel(x: f64, y: f64, c: f64, s: f64) -> (f64, f64) {
    (x * c + y * s, y * c - x * s)
}

/// Rotates a disparity map by `gamma` about its centre.
///
/// The pixel at `(u, v)` of the input lands at the centre-relative position
/// `rotate_coords(u, v, .., gamma)` of the output. The output is resampled by
/// inverse mapping with nearest-neighbour lookup and keeps the input
/// dimensions; destinations whose source falls outside the raster or on an
/// invalid pixel are invalid. Disparity values are copied, never rescaled.
pub fn rotate_map(map: &DisparityImage, gamma: f64) -> Result<DisparityImage> {
    let (w, h) = (map.width(), map.height());
    let (cu, cv) = map.center();
    // inverse rotation: source = R(-gamma) · destination
    let (s, c) = (-gamma).sin_cos();
    let src_values = map.values();
    let src_valid = map.valid_mask();

    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    values
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (vals, oks))| {
            let q = y as f64 - cv;
            for x in 0..w {
                let (su, sv) = rotate_rel(x as f64 - cu, q, c, s);
                let su = (su + cu).round();
                let sv = (sv + cv).round();
                if su < 0.0 || sv < 0.0 || su >= w as f64 || sv >= h as f64 {
                    continue;
                }
                let i = sv as usize * w + su as usize;
                if src_valid[i] {
                    vals[x] = src_values[i];
                    oks[x] = true;
                }
            }
        });
    DisparityImage::from_parts(w, h, values, valid)
}
