use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherModel {
    MovingAverage { k: usize },
    WeightedMovingAverage { k: usize },
    ExponentialSmoothing { alpha: f64 },
    HoltWinters { alpha: f64, beta: f64, gamma: f64, season: usize },
}

impl SmootherModel {
    pub fn label(&self) -> &'static str {
        match self {
            SmootherModel::MovingAverage { .. } => "MA",
            SmootherModel::WeightedMovingAverage { .. } => "WMA",
            SmootherModel::ExponentialSmoothing { .. } => "ES",
            SmootherModel::HoltWinters { .. } => "HoltWinters",
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidArgument(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        match *self {
            SmootherModel::MovingAverage { k } | SmootherModel::WeightedMovingAverage { k } => {
                if k == 0 {
                    return Err(ModelError::InvalidArgument("window k must be at least 1".into()));
                }
                Ok(())
            }
            SmootherModel::ExponentialSmoothing { alpha } => unit("alpha", alpha),
            SmootherModel::HoltWinters {
                alpha,
                beta,
                gamma,
                season,
            } => {
                unit("alpha", alpha)?;
                unit("beta", beta)?;
                unit("gamma", gamma)?;
                if season == 0 {
                    return Err(ModelError::InvalidArgument("season length must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherFit {
    /// One-step prediction for each position; `None` where undefined.
    pub fitted: Vec<Option<f64>>,
    /// Prediction for the position after the last observation.
    pub next: f64,
}

pub fn fit_smoother(xs: &[f64], model: &SmootherModel) -> Result<SmootherFit, ModelError> {
    model.validate()?;
    let n = xs.len();
    if n == 0 {
        return Err(ModelError::TooShort { need: 0, got: 0 });
    }
    match *model {
        SmootherModel::MovingAverage { k } => windowed(xs, k, |window| {
            window.iter().sum::<f64>() / window.len() as f64
        }),
        SmootherModel::WeightedMovingAverage { k } => {
            let norm = (k * (k + 1)) as f64 / 2.0;
            windowed(xs, k, |window| {
                // oldest gets weight 1, newest gets weight k
                window
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (i + 1) as f64 * x)
                    .sum::<f64>()
                    / norm
            })
        }
        SmootherModel::ExponentialSmoothing { alpha } => {
            let mut fitted = vec![None; n];
            // initialized at the first observation
            let mut level = xs[0];
            for t in 1..n {
                level = alpha * xs[t - 1] + (1.0 - alpha) * level;
                fitted[t] = Some(level);
            }
            let next = alpha * xs[n - 1] + (1.0 - alpha) * level;
            Ok(SmootherFit { fitted, next })
        }
        SmootherModel::HoltWinters {
            alpha,
            beta,
            gamma,
            season,
        } => holt_winters(xs, alpha, beta, gamma, season),
    }
}

fn windowed(
    xs: &[f64],
    k: usize,
    combine: impl Fn(&[f64]) -> f64,
) -> Result<SmootherFit, ModelError> {
    let n = xs.len();
    if n < k {
        return Err(ModelError::TooShort { need: k, got: n });
    }
    let fitted = (0..n)
        .map(|t| (t >= k).then(|| combine(&xs[t - k..t])))
        .collect();
    Ok(SmootherFit {
        fitted,
        next: combine(&xs[n - k..]),
    })
}

/// Additive Holt–Winters. Level starts at the first-season mean, trend at the
/// difference of the first two season means (zero with fewer than two
/// seasons), seasonal indices at the first-season deviations.
fn holt_winters(
    xs: &[f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
    m: usize,
) -> Result<SmootherFit, ModelError> {
    let n = xs.len();
    if m >= n {
        return Err(ModelError::InvalidArgument(format!(
            "season length {m} must be below series length {n}"
        )));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mut level = mean(&xs[..m]);
    let mut trend = if n >= 2 * m {
        (mean(&xs[m..2 * m]) - level) / m as f64
    } else {
        0.0
    };
    let mut seasonal: Vec<f64> = xs[..m].iter().map(|x| x - level).collect();
    seasonal.reserve(n - m);
    let mut fitted = vec![None; n];
    for t in m..n {
        let s_prev = seasonal[t - m];
        fitted[t] = Some(level + trend + s_prev);
        let new_level = alpha * (xs[t] - s_prev) + (1.0 - alpha) * (level + trend);
        trend = beta * (new_level - level) + (1.0 - beta) * trend;
        seasonal.push(gamma * (xs[t] - new_level) + (1.0 - gamma) * s_prev);
        level = new_level;
    }
    let next = level + trend + seasonal[n - m];
    Ok(SmootherFit { fitted, next })
}

/// Smoothing weight in 0.01..=1.00 minimizing the one-step squared error.
pub fn fit_es_alpha(xs: &[f64]) -> Result<f64, ModelError> {
    let mut best = (f64::INFINITY, 1.0);
    for i in 1..=100 {
        let alpha = i as f64 / 100.0;
        let fit = fit_smoother(xs, &SmootherModel::ExponentialSmoothing { alpha })?;
        let sse: f64 = xs
            .iter()
            .zip(&fit.fitted)
            .filter_map(|(x, f)| f.map(|f| (x - f).powi(2)))
            .sum();
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_models() -> Vec<SmootherModel> {
        vec![
            SmootherModel::MovingAverage { k: 3 },
            SmootherModel::WeightedMovingAverage { k: 4 },
            SmootherModel::ExponentialSmoothing { alpha: 0.3 },
            SmootherModel::HoltWinters {
                alpha: 0.4,
                beta: 0.2,
                gamma: 0.3,
                season: 4,
            },
        ]
    }

    #[test]
    fn constant_is_fixed_point() {
        let xs = vec![7.5; 20];
        for m in all_models() {
            let fit = fit_smoother(&xs, &m).unwrap();
            for v in fit.fitted.iter().flatten() {
                assert!((v - 7.5).abs() < 1e-12, "{m:?}");
            }
            assert!((fit.next - 7.5).abs() < 1e-12);
        }
    }

    #[test]
    fn es_alpha_one_is_naive() {
        let xs = [3.0, 9.0, 4.0, 1.0];
        let fit = fit_smoother(&xs, &SmootherModel::ExponentialSmoothing { alpha: 1.0 }).unwrap();
        assert_eq!(fit.fitted, vec![None, Some(3.0), Some(9.0), Some(4.0)]);
        assert_eq!(fit.next, 1.0);
    }

    #[test]
    fn moving_average_example() {
        let fit = fit_smoother(&[2.0, 4.0, 6.0, 8.0], &SmootherModel::MovingAverage { k: 2 }).unwrap();
        assert_eq!(fit.fitted, vec![None, None, Some(3.0), Some(5.0)]);
        assert_eq!(fit.next, 7.0);
    }

    #[test]
    fn weighted_moving_average_weights() {
        let fit =
            fit_smoother(&[1.0, 2.0, 4.0], &SmootherModel::WeightedMovingAverage { k: 2 }).unwrap();
        // (1*1 + 2*2) / 3, (1*2 + 2*4) / 3
        assert_eq!(fit.fitted[2], Some(5.0 / 3.0));
        assert_eq!(fit.next, 10.0 / 3.0);
    }

    #[test]
    fn holt_winters_converges_on_exact_season() {
        // trend + period-4 pattern: one-step errors from the rough start die out
        let pattern = [1.0, -2.0, 3.0, -2.0];
        let xs: Vec<f64> = (0..40).map(|t| 10.0 + 0.5 * t as f64 + pattern[t % 4]).collect();
        let m = SmootherModel::HoltWinters {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.5,
            season: 4,
        };
        let fit = fit_smoother(&xs, &m).unwrap();
        let err = |t: usize| (fit.fitted[t].unwrap() - xs[t]).abs();
        let early = (8..12).map(err).fold(0.0, f64::max);
        let late = (36..40).map(err).fold(0.0, f64::max);
        assert!(late < 0.05 && late < 0.1 * early, "{early} -> {late}");
    }

    #[test]
    fn invalid_parameters() {
        let xs = [1.0, 2.0, 3.0];
        assert!(fit_smoother(&xs, &SmootherModel::MovingAverage { k: 0 }).is_err());
        assert!(fit_smoother(&xs, &SmootherModel::ExponentialSmoothing { alpha: 0.0 }).is_err());
        assert!(fit_smoother(&xs, &SmootherModel::ExponentialSmoothing { alpha: 1.5 }).is_err());
        let hw = SmootherModel::HoltWinters {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.5,
            season: 3,
        };
        assert!(matches!(fit_smoother(&xs, &hw), Err(ModelError::InvalidArgument(_))));
    }

    #[test]
    fn es_alpha_search() {
        let xs: Vec<f64> = (0..50).map(|t| t as f64).collect();
        // a pure ramp is tracked best by the naive forecast
        assert_eq!(fit_es_alpha(&xs).unwrap(), 1.0);
    }
}
