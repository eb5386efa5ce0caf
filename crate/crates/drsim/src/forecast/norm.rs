//! Min-max scaling to `[0, 1]` and its inverse.

use serde::{Deserialize, Serialize};

use super::ForecastError;

/// Scaling constants captured from a series; `max > min` always holds for
/// values built through [`NormParams::new`] or [`minmax_normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

impl NormParams {
    pub fn new(min: f64, max: f64) -> Result<Self, ForecastError> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(ForecastError::DegenerateRange);
        }
        Ok(Self { min, max })
    }

    pub fn from_values(values: &[f64]) -> Result<Self, ForecastError> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(min, max)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

/// Scales a series to `[0, 1]`, returning the scaled values and the
/// constants needed to invert the map.
pub fn minmax_normalize(values: &[f64]) -> Result<(Vec<f64>, NormParams), ForecastError> {
    let norm = NormParams::from_values(values)?;
    Ok((normalize_with(values, &norm), norm))
}

pub fn normalize_with(values: &[f64], norm: &NormParams) -> Vec<f64> {
    values.iter().map(|x| norm.scale(*x)).collect()
}

pub fn denormalize(values: &[f64], norm: &NormParams) -> Vec<f64> {
    values.iter().map(|x| norm.unscale(*x)).collect()
}
