//! Forecast accuracy: MAE, MSE, RMSE, MAPE and SMAPE (reported as
//! `100 − error` accuracies), burst-stratified scoring, interval coverage.
//!
//! Weeks with zero actual count are left out of both percentage errors and
//! counted in `n_excluded_zero_actual`; MAE, MSE and RMSE use every scored
//! week.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::burst::BurstAnnotation;
use crate::forecast::ForecastSeries;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("no weeks left to score in stratum {0}")]
    Empty(Stratum),
    #[error("prediction for week {week} is negative or not finite: {value}")]
    InvalidPrediction { week: usize, value: f64 },
    #[error("forecast has no weeks with defined interval bounds")]
    NoIntervals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    All,
    Level2,
    Level3,
}

impl Stratum {
    pub fn label(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::Level2 => "level2",
            Stratum::Level3 => "level3",
        }
    }

    /// Whether a week at burst `level` belongs to this stratum. Level 3 is
    /// the top stratum and also takes any deeper levels.
    pub fn contains(self, level: usize) -> bool {
        match self {
            Stratum::All => true,
            Stratum::Level2 => level == 2,
            Stratum::Level3 => level >= 3,
        }
    }
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub stratum: Stratum,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mape_accuracy: f64,
    pub smape_accuracy: f64,
    /// Masked weeks with a defined prediction.
    pub n_weeks: usize,
    /// Weeks entering the percentage errors.
    pub n_scored: usize,
    pub n_excluded_zero_actual: usize,
    /// Masked weeks skipped because the model has no prediction there.
    pub n_undefined: usize,
}

/// Mean of `2|a − p| / (a + p)` over the pairs, in percent; a pair with
/// both values zero contributes nothing.
pub fn smape(actual: &[f64], predicted: &[f64]) -> f64 {
    let terms = actual.iter().zip(predicted).map(|(&a, &p)| {
        let denom = a + p;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * (a - p).abs() / denom
        }
    });
    100.0 * terms.sum::<f64>() / actual.len() as f64
}

/// Mean of `|a − p| / a` in percent; callers pass only positive actuals.
pub fn mape(actual: &[f64], predicted: &[f64]) -> f64 {
    let terms = actual.iter().zip(predicted).map(|(&a, &p)| (a - p).abs() / a);
    100.0 * terms.sum::<f64>() / actual.len() as f64
}

pub fn accuracy_report(
    actual: &[u64],
    predicted: &[Option<f64>],
    mask: &[bool],
    stratum: Stratum,
) -> Result<AccuracyReport, EvalError> {
    let n = actual.len();
    for (what, found) in [("predicted", predicted.len()), ("mask", mask.len())] {
        if found != n {
            return Err(EvalError::LengthMismatch {
                what,
                expected: n,
                found,
            });
        }
    }
    let mut errors = Vec::new();
    let (mut pct_actual, mut pct_pred) = (Vec::new(), Vec::new());
    let (mut n_undefined, mut n_zero) = (0, 0);
    for i in (0..n).filter(|&i| mask[i]) {
        let Some(p) = predicted[i] else {
            n_undefined += 1;
            continue;
        };
        if !(p >= 0.0 && p.is_finite()) {
            return Err(EvalError::InvalidPrediction { week: i + 1, value: p });
        }
        let a = actual[i] as f64;
        errors.push(a - p);
        if actual[i] == 0 {
            n_zero += 1;
        } else {
            pct_actual.push(a);
            pct_pred.push(p);
        }
    }
    if pct_actual.is_empty() {
        return Err(EvalError::Empty(stratum));
    }
    let k = errors.len() as f64;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / k;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / k;
    Ok(AccuracyReport {
        stratum,
        mae,
        mse,
        rmse: mse.sqrt(),
        mape_accuracy: 100.0 - mape(&pct_actual, &pct_pred),
        smape_accuracy: 100.0 - smape(&pct_actual, &pct_pred),
        n_weeks: errors.len(),
        n_scored: pct_actual.len(),
        n_excluded_zero_actual: n_zero,
        n_undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedAccuracy {
    pub reports: Vec<AccuracyReport>,
    pub notes: Vec<String>,
}

impl StratifiedAccuracy {
    pub fn get(&self, stratum: Stratum) -> Option<&AccuracyReport> {
        self.reports.iter().find(|r| r.stratum == stratum)
    }
}

/// Reports for all weeks, level-2 weeks and level-3 weeks. A stratum with no
/// weeks is omitted and noted.
pub fn stratified_accuracy(
    actual: &[u64],
    predicted: &[Option<f64>],
    bursts: &BurstAnnotation,
) -> Result<StratifiedAccuracy, EvalError> {
    let levels = &bursts.week_levels;
    if levels.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            what: "burst annotation",
            expected: actual.len(),
            found: levels.len(),
        });
    }
    let mut out = StratifiedAccuracy {
        reports: Vec::new(),
        notes: Vec::new(),
    };
    for stratum in [Stratum::All, Stratum::Level2, Stratum::Level3] {
        let mask: Vec<bool> = levels.iter().map(|&l| stratum.contains(l)).collect();
        if !mask.iter().any(|&m| m) {
            out.notes.push(format!("stratum {stratum} has no weeks; report omitted"));
            continue;
        }
        match accuracy_report(actual, predicted, &mask, stratum) {
            Ok(report) => {
                if stratum != Stratum::All && report.n_excluded_zero_actual > 0 {
                    out.notes.push(format!(
                        "stratum {stratum}: {} burst weeks with zero events left out of MAPE/SMAPE",
                        report.n_excluded_zero_actual
                    ));
                }
                out.reports.push(report);
            }
            Err(EvalError::Empty(_)) if stratum != Stratum::All => {
                out.notes.push(format!("stratum {stratum} has no scorable weeks; report omitted"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Fraction of weeks with both bounds defined where `lower ≤ actual ≤ upper`.
pub fn interval_coverage(forecast: &ForecastSeries) -> Result<f64, EvalError> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for row in &forecast.rows {
        if let (Some(lo), Some(hi)) = (row.lower, row.upper) {
            total += 1;
            let a = row.actual as f64;
            if lo <= a && a <= hi {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(EvalError::NoIntervals);
    }
    Ok(hits as f64 / total as f64)
}

/// Aligned text table with one column per model and one row per metric.
pub fn render_table(title: &str, columns: &[(&str, &AccuracyReport)]) -> String {
    let rows: [(&str, Box<dyn Fn(&AccuracyReport) -> String>); 6] = [
        ("MAE", Box::new(|r| format!("{:.2}", r.mae))),
        ("MAPE accuracy (%)", Box::new(|r| format!("{:.2}", r.mape_accuracy))),
        ("SMAPE accuracy (%)", Box::new(|r| format!("{:.2}", r.smape_accuracy))),
        ("RMSE", Box::new(|r| format!("{:.2}", r.rmse))),
        ("MSE", Box::new(|r| format!("{:.2}", r.mse))),
        ("Weeks", Box::new(|r| r.n_weeks.to_string())),
    ];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| columns.iter().map(|(_, r)| f(r)).collect())
        .collect();
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Measure".len());
    let col_w: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(j, (name, _))| cells.iter().map(|row| row[j].len()).max().unwrap_or(0).max(name.len()))
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<label_w$}", "Measure");
    for ((name, _), w) in columns.iter().zip(&col_w) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    let width = label_w + col_w.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(width));
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:<label_w$}");
        for (cell, w) in row.iter().zip(&col_w) {
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ForecastRow;
    use proptest::prelude::*;

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn hand_computed_example() {
        let r = accuracy_report(&[10], &[Some(8.0)], &all(1), Stratum::All).unwrap();
        assert_eq!(r.mae, 2.0);
        assert_eq!(r.rmse, 2.0);
        assert!((r.mape_accuracy - 80.0).abs() < 1e-12);
        assert!((r.smape_accuracy - (100.0 - 400.0 / 18.0)).abs() < 1e-12);
        assert!((r.smape_accuracy - 77.78).abs() < 0.005);
    }

    #[test]
    fn perfect_forecast() {
        let actual = [3, 9, 4];
        let pred: Vec<Option<f64>> = actual.iter().map(|&a| Some(a as f64)).collect();
        let r = accuracy_report(&actual, &pred, &all(3), Stratum::All).unwrap();
        assert_eq!((r.mae, r.mape_accuracy, r.smape_accuracy), (0.0, 100.0, 100.0));
    }

    #[test]
    fn zero_actuals_and_undefined_weeks() {
        let actual = [5, 0, 4, 0, 6];
        let pred = [None, Some(1.0), Some(4.0), Some(2.0), Some(3.0)];
        let r = accuracy_report(&actual, &pred, &all(5), Stratum::All).unwrap();
        assert_eq!(r.n_undefined, 1);
        assert_eq!(r.n_weeks, 4);
        assert_eq!(r.n_scored, 2);
        assert_eq!(r.n_excluded_zero_actual, 2);
        assert_eq!(r.n_scored + r.n_excluded_zero_actual, r.n_weeks);
        // MAE over all four defined weeks
        assert!((r.mae - (1.0 + 0.0 + 2.0 + 3.0) / 4.0).abs() < 1e-12);
        // MAPE over weeks 3 and 5 only
        assert!((r.mape_accuracy - (100.0 - 50.0 * (0.0 + 0.5))).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            accuracy_report(&[1, 2], &[Some(1.0)], &all(2), Stratum::All),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert_eq!(
            accuracy_report(&[0, 0], &[Some(1.0), Some(0.0)], &all(2), Stratum::All),
            Err(EvalError::Empty(Stratum::All))
        );
        assert_eq!(
            accuracy_report(&[1, 2], &[Some(1.0), Some(2.0)], &[false, false], Stratum::Level2),
            Err(EvalError::Empty(Stratum::Level2))
        );
        assert!(matches!(
            accuracy_report(&[1], &[Some(-1.0)], &all(1), Stratum::All),
            Err(EvalError::InvalidPrediction { week: 1, .. })
        ));
    }

    #[test]
    fn strata_follow_levels() {
        let actual = [10, 20, 30, 40, 50];
        let pred = [Some(9.0), Some(18.0), Some(33.0), Some(36.0), Some(50.0)];
        let bursts = BurstAnnotation::from_levels(vec![1, 2, 3, 4, 2]);
        let s = stratified_accuracy(&actual, &pred, &bursts).unwrap();
        assert_eq!(s.reports.len(), 3);
        assert_eq!(s.get(Stratum::Level2).unwrap().n_weeks, 2);
        assert_eq!(s.get(Stratum::Level3).unwrap().n_weeks, 2);
        assert!((s.get(Stratum::Level3).unwrap().mae - 3.5).abs() < 1e-12);
        assert!(s.notes.is_empty());
    }

    #[test]
    fn empty_strata_omitted() {
        let bursts = BurstAnnotation::from_levels(vec![1; 4]);
        let s = stratified_accuracy(&[1, 2, 3, 4], &[Some(1.0); 4], &bursts).unwrap();
        assert_eq!(s.reports.len(), 1);
        assert_eq!(s.reports[0].stratum, Stratum::All);
        assert_eq!(s.notes.len(), 2);
    }

    fn forecast(rows: &[(u64, Option<(f64, f64)>)]) -> ForecastSeries {
        ForecastSeries {
            model: "test".into(),
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, &(actual, b))| ForecastRow {
                    week: i + 1,
                    actual,
                    point: b.map(|(l, u)| 0.5 * (l + u)),
                    median: None,
                    lower: b.map(|x| x.0),
                    upper: b.map(|x| x.1),
                })
                .collect(),
        }
    }

    #[test]
    fn coverage_examples() {
        let f = forecast(&[(5, Some((0.0, 4.0))), (5, Some((4.0, 6.0)))]);
        assert_eq!(interval_coverage(&f).unwrap(), 0.5);
        let f = forecast(&[(1, None), (7, Some((0.0, f64::INFINITY))), (0, Some((0.0, f64::INFINITY)))]);
        assert_eq!(interval_coverage(&f).unwrap(), 1.0);
        assert_eq!(interval_coverage(&forecast(&[(1, None)])), Err(EvalError::NoIntervals));
    }

    #[test]
    fn table_layout() {
        let r = accuracy_report(&[10, 12], &[Some(8.0), Some(12.0)], &all(2), Stratum::All).unwrap();
        let t = render_table("All weeks", &[("BSSM", &r), ("AR(1)", &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "All weeks");
        assert!(lines[1].starts_with("Measure") && lines[1].ends_with("AR(1)"));
        assert!(lines[3].starts_with("MAE") && lines[3].ends_with("1.00"));
        let widths: Vec<usize> = lines[1..].iter().map(|l| l.len()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]), "{t}");
    }

    fn case() -> impl Strategy<Value = (Vec<u64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(1u64..200, n),
                proptest::collection::vec(0.0f64..250.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn metric_identities((actual, pred) in case()) {
            let p: Vec<Option<f64>> = pred.iter().copied().map(Some).collect();
            let r = accuracy_report(&actual, &p, &all(actual.len()), Stratum::All).unwrap();
            prop_assert!((r.rmse * r.rmse - r.mse).abs() <= 1e-10 * (1.0 + r.mse));
            prop_assert!(r.mae <= r.rmse + 1e-12);
            prop_assert!(r.mape_accuracy <= 100.0 && r.smape_accuracy <= 100.0);
        }

        #[test]
        fn scale_equivariance((actual, pred) in case(), c in 1u64..6) {
            let p: Vec<Option<f64>> = pred.iter().copied().map(Some).collect();
            let scaled_actual: Vec<u64> = actual.iter().map(|a| a * c).collect();
            let scaled_pred: Vec<Option<f64>> = pred.iter().map(|v| Some(v * c as f64)).collect();
            let mask = all(actual.len());
            let r = accuracy_report(&actual, &p, &mask, Stratum::All).unwrap();
            let s = accuracy_report(&scaled_actual, &scaled_pred, &mask, Stratum::All).unwrap();
            let c = c as f64;
            prop_assert!(close(s.mae, c * r.mae, 1e-10));
            prop_assert!(close(s.rmse, c * r.rmse, 1e-10));
            prop_assert!(close(s.mape_accuracy, r.mape_accuracy, 1e-10));
            prop_assert!(close(s.smape_accuracy, r.smape_accuracy, 1e-10));
        }

        #[test]
        fn smape_symmetric(a in proptest::collection::vec(0.0f64..100.0, 1..20), seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (v * 1.7 + (seed + i as u64) as f64 % 13.0).abs()).collect();
            prop_assert!((smape(&a, &b) - smape(&b, &a)).abs() < 1e-12);
        }
    }
}
