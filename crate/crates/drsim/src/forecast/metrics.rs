//! MAE / MAPE / R² evaluation.

use serde::{Deserialize, Serialize};

use super::lstm::ForecastModel;
use super::norm::NormParams;
use super::window::WindowDataset;
use super::ForecastError;

/// Targets with absolute value at or below this are excluded from MAPE.
const MAPE_EPSILON: f64 = 1e-8;

/// Reference metrics recorded for the default two-layer architecture on
/// the full May-2011 cluster trace. Desk-scale runs are compared
/// qualitatively against these, never asserted to match.
pub const FULL_TRACE_REFERENCE: EvalMetrics = EvalMetrics {
    mae: 0.0278,
    mape: 3.5268,
    r2: 0.9598,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mae: f64,
    /// Mean absolute percentage error, in percent.
    pub mape: f64,
    pub r2: f64,
}

/// Whether metrics are computed on denormalized (original-unit) values or
/// directly on the normalized scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricScale {
    Denormalized,
    Normalized,
}

/// Evaluates the model on a (normalized) window dataset.
pub fn evaluate(
    model: &ForecastModel,
    test: &WindowDataset,
    scale: MetricScale,
) -> Result<EvalMetrics, ForecastError> {
    let predictions: Vec<f64> = test
        .x
        .iter()
        .map(|w| model.forward(w))
        .collect::<Result<_, _>>()?;
    metrics_against(test, &predictions, model.norm(), scale)
}

/// Metrics of the persistence baseline, which predicts the last value of
/// each window. The reference point for forecast skill.
pub fn persistence_metrics(
    test: &WindowDataset,
    norm: &NormParams,
    scale: MetricScale,
) -> Result<EvalMetrics, ForecastError> {
    let predictions: Vec<f64> = test.x.iter().map(|w| w[w.len() - 1]).collect();
    metrics_against(test, &predictions, norm, scale)
}

fn metrics_against(
    test: &WindowDataset,
    normalized_predictions: &[f64],
    norm: &NormParams,
    scale: MetricScale,
) -> Result<EvalMetrics, ForecastError> {
    if test.is_empty() {
        return Err(ForecastError::EmptyDataset);
    }
    let rescale = |v: f64| match scale {
        MetricScale::Denormalized => norm.unscale(v),
        MetricScale::Normalized => v,
    };
    let targets: Vec<f64> = (0..test.len()).map(|i| rescale(test.target(i))).collect();
    let predictions: Vec<f64> = normalized_predictions.iter().map(|p| rescale(*p)).collect();

    let n = targets.len() as f64;
    let mae = targets
        .iter()
        .zip(&predictions)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / n;

    let mut mape_sum = 0.0;
    let mut mape_terms = 0usize;
    for (y, p) in targets.iter().zip(&predictions) {
        if y.abs() > MAPE_EPSILON {
            mape_sum += ((y - p) / y).abs();
            mape_terms += 1;
        }
    }
    if mape_terms == 0 {
        return Err(ForecastError::AllTargetsNearZero);
    }
    let mape = 100.0 * mape_sum / mape_terms as f64;

    let mean_y = targets.iter().sum::<f64>() / n;
    let sse: f64 = targets
        .iter()
        .zip(&predictions)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    let sst: f64 = targets.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let r2 = if sst == 0.0 {
        if sse == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - sse / sst
    };

    Ok(EvalMetrics { mae, mape, r2 })
}
