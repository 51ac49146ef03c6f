//! Weekly count series: ingestion, summary statistics, dispersion, and
//! autocorrelation diagnostics.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::chi_square_sf;

/// Minimum length for any model-fitting operation.
pub const MIN_MODEL_LENGTH: usize = 4;

/// Histogram bin width in events/week.
pub const HISTOGRAM_BIN_WIDTH: u64 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("non-contiguous week index at row {row}: expected {expected}, found {found}")]
    NonContiguous { row: usize, expected: i64, found: i64 },
    #[error("duplicate week index {week} at row {row}")]
    DuplicateWeek { row: usize, week: i64 },
    #[error("negative count {count} at row {row}")]
    NegativeCount { row: usize, count: i64 },
    #[error("series too short: need at least {need} weeks, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("correlations undefined for a constant series")]
    UndefinedCorrelation,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Contiguous weekly event counts. Week indices are implicit: `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    counts: Vec<u64>,
    pub label: String,
}

impl CountSeries {
    pub fn new(counts: Vec<u64>, label: impl Into<String>) -> Self {
        Self {
            counts,
            label: label.into(),
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn week_indices(&self) -> impl Iterator<Item = usize> + '_ {
        1..=self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn require_len(&self, need: usize) -> Result<(), SeriesError> {
        if self.len() < need {
            Err(SeriesError::TooShort {
                need,
                got: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Parse the `week,count` CSV format. Data rows are numbered from 1.
    pub fn parse_csv(text: &str, label: impl Into<String>) -> Result<Self, SeriesError> {
        let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
        let header = lines.next().unwrap_or("");
        let header = header.strip_prefix('\u{feff}').unwrap_or(header);
        if header.trim() != "week,count" {
            return Err(SeriesError::Parse {
                row: 0,
                message: format!("expected header `week,count`, found `{header}`"),
            });
        }
        let mut rows: Vec<&str> = lines.collect();
        // a single trailing newline terminates the last row
        if rows.last() == Some(&"") {
            rows.pop();
        }

        let mut counts = Vec::with_capacity(rows.len());
        for (i, line) in rows.iter().enumerate() {
            let row = i + 1;
            if line.trim().is_empty() {
                return Err(SeriesError::Parse {
                    row,
                    message: "blank line".into(),
                });
            }
            if line.trim_start().starts_with('#') {
                return Err(SeriesError::Parse {
                    row,
                    message: "comment lines are not allowed".into(),
                });
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 {
                return Err(SeriesError::Parse {
                    row,
                    message: format!("expected 2 fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str, what: &str| {
                s.trim().parse::<i64>().map_err(|_| SeriesError::Parse {
                    row,
                    message: format!("{what} `{}` is not an integer", s.trim()),
                })
            };
            let week = parse(fields[0], "week")?;
            let count = parse(fields[1], "count")?;
            let expected = row as i64;
            if week != expected {
                if week < expected && week >= 1 {
                    return Err(SeriesError::DuplicateWeek { row, week });
                }
                return Err(SeriesError::NonContiguous {
                    row,
                    expected,
                    found: week,
                });
            }
            if count < 0 {
                return Err(SeriesError::NegativeCount { row, count });
            }
            counts.push(count as u64);
        }
        Ok(Self::new(counts, label))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, SeriesError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SeriesError::Io(format!("{}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_csv(&text, label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("week,count\n");
        for (w, c) in self.week_indices().zip(&self.counts) {
            out.push_str(&format!("{w},{c}\n"));
        }
        out
    }
}

impl fmt::Display for CountSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} weeks, {} events)", self.label, self.len(), self.total())
    }
}

/// Load a `week,count` CSV file.
pub fn load_count_series(path: impl AsRef<Path>) -> Result<CountSeries, SeriesError> {
    CountSeries::load_csv(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lower: u64,
    pub bin_upper: u64,
    pub n_weeks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n_weeks: usize,
    pub total_events: u64,
    pub zero_weeks: usize,
    pub mean: f64,
    pub variance: f64,
    /// Variance-to-mean ratio; `None` when the mean is zero.
    pub dispersion_index: Option<f64>,
    pub histogram: Vec<HistogramBin>,
}

pub fn summarize(series: &CountSeries) -> Result<SummaryStats, SeriesError> {
    series.require_len(2)?;
    let n = series.len();
    let xs = series.as_f64();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let dispersion_index = (mean > 0.0).then(|| variance / mean);

    let max = series.counts().iter().copied().max().unwrap_or(0);
    let n_bins = (max / HISTOGRAM_BIN_WIDTH + 1) as usize;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            bin_lower: i as u64 * HISTOGRAM_BIN_WIDTH,
            bin_upper: (i as u64 + 1) * HISTOGRAM_BIN_WIDTH,
            n_weeks: 0,
        })
        .collect();
    for &c in series.counts() {
        bins[(c / HISTOGRAM_BIN_WIDTH) as usize].n_weeks += 1;
    }

    Ok(SummaryStats {
        n_weeks: n,
        total_events: series.total(),
        zero_weeks: series.counts().iter().filter(|&&c| c == 0).count(),
        mean,
        variance,
        dispersion_index,
        histogram: bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelogramResult {
    /// `0..=max_lag`
    pub lags: Vec<usize>,
    pub acf_values: Vec<f64>,
    /// Partial autocorrelations for lags `1..=max_lag`.
    pub pacf_values: Vec<f64>,
    pub confidence_band: f64,
}

/// Sample autocorrelations about the mean, lags `0..=max_lag`.
pub fn acf(xs: &[f64], max_lag: usize) -> Result<Vec<f64>, SeriesError> {
    let n = xs.len();
    if max_lag >= n {
        return Err(SeriesError::InvalidArgument(format!(
            "max_lag {max_lag} must be below series length {n}"
        )));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(SeriesError::UndefinedCorrelation);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for k in 1..=max_lag {
        let num: f64 = dev[k..].iter().zip(&dev[..n - k]).map(|(a, b)| a * b).sum();
        out.push((num / denom).clamp(-1.0, 1.0));
    }
    Ok(out)
}

/// Durbin–Levinson recursion from autocorrelations `acf[0..=h]` to partial
/// autocorrelations at lags `1..=h`.
pub fn pacf_from_acf(acf: &[f64]) -> Vec<f64> {
    let h = acf.len().saturating_sub(1);
    let mut pacf = Vec::with_capacity(h);
    let mut phi: Vec<f64> = Vec::with_capacity(h);
    let mut v = 1.0;
    for k in 1..=h {
        let num = acf[k] - (1..k).map(|j| phi[j - 1] * acf[k - j]).sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let a = a.clamp(-1.0, 1.0);
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - a * prev[k - j - 1];
        }
        phi.push(a);
        v *= 1.0 - a * a;
        pacf.push(a);
    }
    pacf
}

pub fn correlogram(xs: &[f64], max_lag: usize) -> Result<CorrelogramResult, SeriesError> {
    let n = xs.len();
    if 2 * max_lag >= n {
        return Err(SeriesError::InvalidArgument(format!(
            "max_lag {max_lag} must be below n/2 (n = {n})"
        )));
    }
    let acf_values = acf(xs, max_lag)?;
    let pacf_values = pacf_from_acf(&acf_values);
    Ok(CorrelogramResult {
        lags: (0..=max_lag).collect(),
        acf_values,
        pacf_values,
        confidence_band: 1.96 / (n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Ljung–Box portmanteau test on residual autocorrelations `1..=n_lags`,
/// with `fitted_df` degrees of freedom removed for fitted ARMA terms.
pub fn ljung_box(
    residuals: &[f64],
    n_lags: usize,
    fitted_df: usize,
) -> Result<LjungBox, SeriesError> {
    if n_lags <= fitted_df {
        return Err(SeriesError::InvalidArgument(format!(
            "degrees of freedom {n_lags} - {fitted_df} must be positive"
        )));
    }
    if residuals.len() <= 3 * n_lags {
        return Err(SeriesError::InvalidArgument(format!(
            "need more than {} residuals for {n_lags} lags, got {}",
            3 * n_lags,
            residuals.len()
        )));
    }
    let rho = acf(residuals, n_lags)?;
    ljung_box_from_acf(&rho, residuals.len(), fitted_df)
}

/// Ljung–Box statistic from precomputed autocorrelations (`acf[0]` is lag 0).
pub fn ljung_box_from_acf(
    acf: &[f64],
    n: usize,
    fitted_df: usize,
) -> Result<LjungBox, SeriesError> {
    let h = acf.len().saturating_sub(1);
    if h <= fitted_df {
        return Err(SeriesError::InvalidArgument(format!(
            "degrees of freedom {h} - {fitted_df} must be positive"
        )));
    }
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * (1..=h)
            .map(|k| acf[k] * acf[k] / (nf - k as f64))
            .sum::<f64>();
    let df = h - fitted_df;
    Ok(LjungBox {
        statistic: q,
        p_value: chi_square_sf(q, df as f64),
        df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson, StandardNormal};

    #[test]
    fn parse_simple_file() {
        let s = CountSeries::parse_csv("week,count\n1,0\n2,5\n", "t").unwrap();
        assert_eq!(s.counts(), &[0, 5]);
        let crlf = CountSeries::parse_csv("week,count\r\n1,0\r\n2,5\r\n", "t").unwrap();
        assert_eq!(crlf.counts(), &[0, 5]);
    }

    #[test]
    fn gap_names_row() {
        let err = CountSeries::parse_csv("week,count\n1,3\n3,4\n", "t").unwrap_err();
        assert!(err
            .to_string()
            .starts_with("non-contiguous week index at row 2"));
    }

    #[test]
    fn rejects_bad_rows() {
        let cases = [
            ("week,count\n1,3\n1,4\n", "duplicate week index 1 at row 2"),
            ("week,count\n1,-3\n", "negative count -3 at row 1"),
            ("week,count\n1,3\n\n2,4\n", "row 2: blank line"),
            ("week,count\n# hi\n1,3\n", "row 1: comment lines are not allowed"),
            ("week,count\n1,x\n", "row 1: count `x` is not an integer"),
            ("count,week\n1,1\n", "row 0: expected header"),
            ("week,count\n2,1\n", "non-contiguous week index at row 1"),
        ];
        for (text, want) in cases {
            let err = CountSeries::parse_csv(text, "t").unwrap_err().to_string();
            assert!(err.starts_with(want), "{err:?} vs {want:?}");
        }
    }

    #[test]
    fn summary_small_cases() {
        let s = summarize(&CountSeries::new(vec![0, 1, 2, 3], "")).unwrap();
        assert_eq!(s.mean, 1.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.dispersion_index.unwrap() - 10.0 / 9.0).abs() < 1e-15);

        let c = summarize(&CountSeries::new(vec![5; 4], "")).unwrap();
        assert_eq!(c.variance, 0.0);
        assert_eq!(c.dispersion_index, Some(0.0));

        let z = summarize(&CountSeries::new(vec![0; 6], "")).unwrap();
        assert_eq!(z.dispersion_index, None);
        assert!(serde_json::to_string(&z)
            .unwrap()
            .contains("\"dispersion_index\":null"));

        assert!(summarize(&CountSeries::new(vec![3], "")).is_err());
    }

    #[test]
    fn histogram_bins() {
        let s = summarize(&CountSeries::new(vec![0, 9, 10, 25, 3], "")).unwrap();
        let counts: Vec<usize> = s.histogram.iter().map(|b| b.n_weeks).collect();
        assert_eq!(counts, vec![3, 1, 1]);
        assert_eq!(s.histogram[2].bin_lower, 20);
        assert_eq!(s.histogram[2].bin_upper, 30);
        assert_eq!(s.zero_weeks, 1);
    }

    #[test]
    fn poisson_dispersion_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &lambda in &[1.0, 5.0, 25.0] {
            let pois = Poisson::new(lambda).unwrap();
            let counts: Vec<u64> = (0..10_000).map(|_| pois.sample(&mut rng) as u64).collect();
            let d = summarize(&CountSeries::new(counts, "")).unwrap();
            let i = d.dispersion_index.unwrap();
            assert!((0.9..=1.1).contains(&i), "lambda {lambda}: {i}");
        }
    }

    #[test]
    fn acf_examples() {
        let r = acf(&[1.0, 2.0, 3.0, 4.0, 5.0], 1).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] - 0.4).abs() < 1e-15);
        assert_eq!(
            acf(&[3.0; 10], 2).unwrap_err(),
            SeriesError::UndefinedCorrelation
        );
        assert!(correlogram(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
    }

    #[test]
    fn white_noise_acf_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let c = correlogram(&xs, 10).unwrap();
        for k in 1..=10 {
            assert!(c.acf_values[k].abs() < 0.05, "lag {k}: {}", c.acf_values[k]);
        }
        assert!((c.confidence_band - 0.0196).abs() < 1e-12);
    }

    #[test]
    fn pacf_of_ar1_cuts_off() {
        // exact AR(1) autocorrelations rho^k give pacf (rho, 0, 0, ...)
        let rho: f64 = 0.7;
        let acf: Vec<f64> = (0..6).map(|k| rho.powi(k)).collect();
        let p = pacf_from_acf(&acf);
        assert!((p[0] - rho).abs() < 1e-14);
        for v in &p[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn ljung_box_forced_zero() {
        let mut acf = vec![0.0; 11];
        acf[0] = 1.0;
        let lb = ljung_box_from_acf(&acf, 100, 0).unwrap();
        assert_eq!(lb.statistic, 0.0);
        assert_eq!(lb.p_value, 1.0);
    }

    #[test]
    fn ljung_box_errors() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert!(ljung_box(&xs, 5, 5).is_err());
        assert!(ljung_box(&xs[..15], 5, 0).is_err());
    }

    #[test]
    fn ljung_box_white_noise_accepts() {
        let mut passes = 0;
        for rep in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let xs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
            if ljung_box(&xs, 10, 0).unwrap().p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 99, "{passes}");
    }

    #[test]
    fn ljung_box_ar1_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..500)
            .map(|_| {
                x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        assert!(ljung_box(&xs, 10, 0).unwrap().p_value < 0.001);
    }

    proptest! {
        #[test]
        fn acf_affine_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 20..60),
            scale in 0.01f64..100.0,
            shift in -1e3f64..1e3,
        ) {
            let a = acf(&xs, 5).unwrap();
            let ys: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
            let b = acf(&ys, 5).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12, "{} {}", u, v);
            }
        }

        #[test]
        fn histogram_conserves_weeks(counts in proptest::collection::vec(0u64..200, 2..80)) {
            let s = summarize(&CountSeries::new(counts.clone(), "")).unwrap();
            prop_assert_eq!(s.histogram.iter().map(|b| b.n_weeks).sum::<usize>(), counts.len());
            for w in s.histogram.windows(2) {
                prop_assert_eq!(w[0].bin_upper, w[1].bin_lower);
            }
            prop_assert!(s.zero_weeks <= s.n_weeks);
        }

        #[test]
        fn constant_dispersion_zero(c in 1u64..1000, n in 2usize..50) {
            let s = summarize(&CountSeries::new(vec![c; n], "")).unwrap();
            prop_assert_eq!(s.dispersion_index, Some(0.0));
        }
    }
}
