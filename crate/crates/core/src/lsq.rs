//! Least-squares quadratic fitting on a centred, scaled abscissa.
//!
//! Abscissae are mapped to `t = (x - mean) / scale` before the normal
//! equations are formed, which keeps the 3×3 system well conditioned when `x`
//! spans hundreds of rows.

use crate::error::{Error, Result};
use crate::model::QuadraticRoadModel;

/// Relative pivot below which the normal matrix is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-10;

/// Running sums of the normal equations in the normalized abscissa.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NormalSums {
    pub n: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

impl NormalSums {
    #[inline]
    pub fn push(&mut self, t: f64, d: f64) {
        let t2 = t * t;
        self.n += 1.0;
        self.t1 += t;
        self.t2 += t2;
        self.t3 += t2 * t;
        self.t4 += t2 * t2;
        self.d0 += d;
        self.d1 += d * t;
        self.d2 += d * t2;
    }

    pub fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.t1 += o.t1;
        self.t2 += o.t2;
        self.t3 += o.t3;
        self.t4 += o.t4;
        self.d0 += o.d0;
        self.d1 += o.d1;
        self.d2 += o.d2;
    }

    /// Solves for `[b0, b1, b2]` in `d ≈ b0 + b1·t + b2·t²`.
    pub fn solve(&self) -> Result<[f64; 3]> {
        if self.n < 3.0 {
            return Err(Error::Underdetermined { available: self.n as usize, required: 3 });
        }
        let inv = 1.0 / self.n;
        let mut a = [
            [1.0, self.t1 * inv, self.t2 * inv],
            [self.t1 * inv, self.t2 * inv, self.t3 * inv],
            [self.t2 * inv, self.t3 * inv, self.t4 * inv],
        ];
        let mut b = [self.d0 * inv, self.d1 * inv, self.d2 * inv];
        let norm = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        solve3(&mut a, &mut b, norm)?;
        Ok(b)
    }
}

/// Gaussian elimination with partial pivoting; the solution overwrites `b`.
fn solve3(a: &mut [[f64; 3]; 3], b: &mut [f64; 3], norm: f64) -> Result<()> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() <= SINGULAR_PIVOT * norm {
            return Err(Error::DegenerateGeometry("fewer than three distinct rows in the fit"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..3).rev() {
        let mut s = b[col];
        for k in col + 1..3 {
            s -= a[col][k] * b[k];
        }
        b[col] = s / a[col][col];
    }
    Ok(())
}

/// A quadratic fitted in the normalized abscissa `t = (x - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFit {
    pub mean: f64,
    pub scale: f64,
    pub coeffs: [f64; 3],
}

impl QuadFit {
    pub(crate) fn from_sums(mean: f64, scale: f64, sums: &NormalSums) -> Result<Self> {
        Ok(Self { mean, scale, coeffs: sums.solve()? })
    }

    #[inline]
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.normalize(x);
        self.coeffs[0] + t * (self.coeffs[1] + t * self.coeffs[2])
    }

    /// Expands the fit into monomial coefficients of `x`.
    pub fn model(&self) -> QuadraticRoadModel {
        let [b0, b1, b2] = self.coeffs;
        let (m, s) = (self.mean, self.scale);
        QuadraticRoadModel {
            alpha0: b0 - b1 * m / s + b2 * m * m / (s * s),
            alpha1: b1 / s - 2.0 * b2 * m / (s * s),
            alpha2: b2 / (s * s),
        }
    }
}

/// Least-squares parabola through `(x, d)` samples. Exact interpolation when
/// given three points with distinct `x`.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadFit> {
    if points.len() < 3 {
        return Err(Error::Underdetermined { available: points.len(), required: 3 });
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateGeometry("all samples share one abscissa"));
    }
    let mut sums = NormalSums::default();
    for &(x, d) in points {
        sums.push((x - mean) / scale, d);
    }
    QuadFit::from_sums(mean, scale, &sums)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_parabola() {
        let truth = QuadraticRoadModel { alpha0: 100.0, alpha1: 0.3, alpha2: 0.1 };
        let pts: Vec<_> = (0..480).map(|v| (v as f64, truth.evaluate(v as f64))).collect();
        let fit = fit_quadratic(&pts).unwrap();
        assert!(fit.model().max_abs_diff(&truth) < 1e-9, "{:?}", fit.model());
        for &(x, d) in &pts {
            assert!((fit.eval(x) - d).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolates_three_points() {
        let pts = [(-1.0, 4.0), (2.0, 1.0), (5.0, 10.0)];
        let fit = fit_quadratic(&pts).unwrap();
        for (x, d) in pts {
            assert!((fit.eval(x) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_quadratic(&[(0.0, 1.0), (1.0, 2.0)]), Err(Error::Underdetermined { .. })));
        assert!(matches!(
            fit_quadratic(&[(3.0, 1.0), (3.0, 2.0), (3.0, 5.0)]),
            Err(Error::DegenerateGeometry(_))
        ));
        // two distinct abscissae cannot pin down a parabola
        assert!(matches!(
            fit_quadratic(&[(0.0, 1.0), (1.0, 2.0), (0.0, 1.5), (1.0, 2.5)]),
            Err(Error::DegenerateGeometry(_))
        ));
    }
}
