use serde::{Deserialize, Serialize};

use super::{fit_smoother, ARMAModel, ARModel, ModelError, SmootherModel, TrendFit};
use crate::forecast::{ForecastRow, ForecastSeries};
use crate::series::CountSeries;

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassicalModel {
    Ar(ARModel),
    Arma(ARMAModel),
    Smoother {
        model: SmootherModel,
        n_obs: usize,
    },
}

impl ClassicalModel {
    pub fn label(&self) -> String {
        match self {
            ClassicalModel::Ar(m) => format!("AR({})", m.order_p),
            ClassicalModel::Arma(m) => format!("ARMA({},{})", m.order_p, m.order_q),
            ClassicalModel::Smoother { model, .. } => model.label().to_string(),
        }
    }

    pub fn n_obs(&self) -> usize {
        match self {
            ClassicalModel::Ar(m) => m.n_obs,
            ClassicalModel::Arma(m) => m.n_obs,
            ClassicalModel::Smoother { n_obs, .. } => *n_obs,
        }
    }

    fn one_step(&self, xs: &[f64]) -> Result<(Vec<Option<f64>>, f64), ModelError> {
        match self {
            ClassicalModel::Ar(m) => Ok((m.predict_one_step(xs), m.noise_variance.sqrt())),
            ClassicalModel::Arma(m) => Ok((m.predict_one_step(xs), m.noise_variance.sqrt())),
            ClassicalModel::Smoother { model, .. } => {
                let fit = fit_smoother(xs, model)?;
                let (sse, k) = xs
                    .iter()
                    .zip(&fit.fitted)
                    .filter_map(|(x, f)| f.map(|f| (x - f).powi(2)))
                    .fold((0.0, 0usize), |(s, k), e| (s + e, k + 1));
                let sigma = if k > 0 { (sse / k as f64).sqrt() } else { 0.0 };
                Ok((fit.fitted, sigma))
            }
        }
    }
}

/// Count-scale one-step forecasts: the model's prediction for the modelled
/// series (trend residuals, or raw counts when `trend` is `None`) plus the
/// trend component, with a Gaussian 95% interval. Point and bounds are
/// clamped at zero.
pub fn classical_forecast(
    series: &CountSeries,
    model: &ClassicalModel,
    trend: Option<&TrendFit>,
) -> Result<ForecastSeries, ModelError> {
    let n = series.len();
    if model.n_obs() != n {
        return Err(ModelError::LengthMismatch {
            expected: n,
            found: model.n_obs(),
        });
    }
    let modelled: Vec<f64> = match trend {
        Some(t) => {
            if t.residuals.len() != n {
                return Err(ModelError::LengthMismatch {
                    expected: n,
                    found: t.residuals.len(),
                });
            }
            t.residuals.clone()
        }
        None => series.as_f64(),
    };
    let (pred, sigma) = model.one_step(&modelled)?;
    let rows = series
        .week_indices()
        .zip(series.counts())
        .zip(pred)
        .map(|((week, &actual), p)| match p {
            // week 1 has no history to forecast from
            Some(p) if week > 1 => {
                let centre = p + trend.map_or(0.0, |t| t.component(week));
                ForecastRow {
                    week,
                    actual,
                    point: Some(centre.max(0.0)),
                    median: Some(centre.max(0.0)),
                    lower: Some((centre - Z_95 * sigma).max(0.0)),
                    upper: Some((centre + Z_95 * sigma).max(0.0)),
                }
            }
            _ => ForecastRow::missing(week, actual),
        })
        .collect();
    Ok(ForecastSeries {
        model: model.label(),
        rows,
    })
}
