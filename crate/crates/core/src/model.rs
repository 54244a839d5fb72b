use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertical road profile `d(v) = alpha0 + alpha1·v + alpha2·v²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRoadModel {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl QuadraticRoadModel {
    pub fn new(alpha0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha0.is_finite() && alpha1.is_finite() && alpha2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "road model coefficients must be finite: ({alpha0}, {alpha1}, {alpha2})"
            )));
        }
        Ok(Self { alpha0, alpha1, alpha2 })
    }

    pub const fn constant(c: f64) -> Self {
        Self { alpha0: c, alpha1: 0.0, alpha2: 0.0 }
    }

    #[inline]
    pub fn evaluate(&self, v: f64) -> f64 {
        self.alpha0 + self.alpha1 * v + self.alpha2 * v * v
    }

    /// Re-expresses the model in a coordinate shifted by `offset`, so that
    /// `shifted.evaluate(x + offset) == self.evaluate(x)`.
    ///
    /// A model fitted in centre-relative rows `v'` becomes an absolute-row
    /// model with `shift_origin(v_o)`.
    pub fn shift_origin(&self, offset: f64) -> Self {
        let Self { alpha0, alpha1, alpha2 } = *self;
        Self {
            alpha0: alpha0 - alpha1 * offset + alpha2 * offset * offset,
            alpha1: alpha1 - 2.0 * alpha2 * offset,
            alpha2,
        }
    }

    pub fn coefficients(&self) -> [f64; 3] {
        [self.alpha0, self.alpha1, self.alpha2]
    }

    /// Largest componentwise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coefficients()
            .iter()
            .zip(other.coefficients())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `d(v)` for `model`.
pub fn evaluate_model(model: &QuadraticRoadModel, v: f64) -> f64 {
    model.evaluate(v)
}
