use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ols::ols;
use super::ModelError;
use crate::series::CountSeries;

/// Linear trend plus a level shift starting at `break_point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub std_errors: [f64; 3],
    pub break_point: usize,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub df: (usize, usize),
}

impl TrendFit {
    /// Trend plus break component at 1-based week `t`.
    pub fn component(&self, t: usize) -> f64 {
        let shift = if t >= self.break_point { self.beta2 } else { 0.0 };
        self.beta0 + self.beta1 * t as f64 + shift
    }
}

fn design(n: usize, break_point: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 3, |i, j| {
        let t = i + 1;
        match j {
            0 => 1.0,
            1 => t as f64,
            _ => {
                if t >= break_point {
                    1.0
                } else {
                    0.0
                }
            }
        }
    })
}

pub fn fit_trend_break(series: &CountSeries, break_point: usize) -> Result<TrendFit, ModelError> {
    fit_trend_break_values(&series.as_f64(), break_point)
}

pub fn fit_trend_break_values(y: &[f64], break_point: usize) -> Result<TrendFit, ModelError> {
    let n = y.len();
    if !(break_point > 1 && break_point < n) {
        return Err(ModelError::InvalidArgument(format!(
            "break point {break_point} must lie strictly between 1 and {n}"
        )));
    }
    let fit = ols(&design(n, break_point), y)?;
    let c = &fit.coefficients;
    let se = &fit.std_errors;
    Ok(TrendFit {
        beta0: c[0],
        beta1: c[1],
        beta2: c[2],
        std_errors: [se[0], se[1], se[2]],
        break_point,
        residuals: fit.residuals,
        rss: fit.rss,
        r_squared: fit.r_squared,
        f_statistic: fit.f_statistic,
        f_p_value: fit.f_p_value,
        df: fit.df,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakSearch {
    pub break_point: usize,
    /// `(candidate, rss)` for every candidate in the range.
    pub rss_curve: Vec<(usize, f64)>,
    /// Set when the RSS curve is flat to 1e-6 of the total sum of squares;
    /// `break_point` is then the start of the range.
    pub no_break_evidence: bool,
}

const FLAT_TOL: f64 = 1e-6;

/// Grid search for the level-shift week minimizing the residual sum of squares.
pub fn detect_break(
    series: &CountSeries,
    candidates: RangeInclusive<usize>,
) -> Result<BreakSearch, ModelError> {
    let y = series.as_f64();
    let n = y.len();
    if candidates.is_empty() {
        return Err(ModelError::InvalidArgument("empty break candidate range".into()));
    }
    if *candidates.start() < 2 || *candidates.end() > n - 1 {
        return Err(ModelError::InvalidArgument(format!(
            "break candidates {}..={} must lie within 2..={}",
            candidates.start(),
            candidates.end(),
            n - 1
        )));
    }
    let mut curve = Vec::with_capacity(candidates.clone().count());
    for b in candidates.clone() {
        curve.push((b, fit_trend_break_values(&y, b)?.rss));
    }
    let (mut best, mut best_rss) = curve[0];
    let mut worst_rss = best_rss;
    for &(b, rss) in &curve[1..] {
        if rss < best_rss {
            best = b;
            best_rss = rss;
        }
        worst_rss = worst_rss.max(rss);
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let flat = worst_rss - best_rss <= FLAT_TOL * tss.max(f64::MIN_POSITIVE);
    if flat {
        best = *candidates.start();
    }
    Ok(BreakSearch {
        break_point: best,
        rss_curve: curve,
        no_break_evidence: flat,
    })
}
