use nalgebra::{DMatrix, DVector};

use super::ModelError;
use crate::special::f_sf;

const RANK_TOL: f64 = 1e-10;
const EXACT_FIT_TOL: f64 = 1e-20;

/// Result of an ordinary least squares fit. The first design column is
/// assumed to be the intercept when computing R² and the overall F test.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub r_squared: f64,
    /// `None` for an exact fit (zero residual variance).
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub df: (usize, usize),
}

pub fn ols(design: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, ModelError> {
    let (n, k) = design.shape();
    if n != y.len() {
        return Err(ModelError::LengthMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n <= k {
        return Err(ModelError::Singular(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * scale) {
        return Err(ModelError::Singular("design matrix is rank deficient".into()));
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| ModelError::Singular("triangular solve failed".into()))?;
    let fitted = design * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    let df_resid = n - k;
    let sigma2 = rss / df_resid as f64;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| ModelError::Singular("R is not invertible".into()))?;
    let cov_unscaled = &r_inv * r_inv.transpose();
    let std_errors = (0..k).map(|i| (sigma2 * cov_unscaled[(i, i)]).sqrt()).collect();

    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let df_model = k - 1;
    // an exact fit leaves only rounding noise in the residuals
    let exact = rss <= EXACT_FIT_TOL * tss;
    let (f_statistic, f_p_value) = if df_model > 0 && rss > 0.0 && !exact {
        let f = ((tss - rss).max(0.0) / df_model as f64) / sigma2;
        (Some(f), Some(f_sf(f, df_model as f64, df_resid as f64)))
    } else {
        (None, None)
    };
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals,
        rss,
        tss,
        r_squared,
        f_statistic,
        f_p_value,
        df: (df_model, df_resid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_regression_matches_closed_form() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [2.1, 3.9, 6.2, 7.8, 10.1, 12.2];
        let design = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        let fit = ols(&design, &y).unwrap();
        let mx = 3.5;
        let my = y.iter().sum::<f64>() / 6.0;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((fit.coefficients[1] - slope).abs() < 1e-12);
        assert!((fit.coefficients[0] - (my - slope * mx)).abs() < 1e-12);
        assert_eq!(fit.df, (1, 4));
        // F = t^2 for a single regressor
        let t = fit.coefficients[1] / fit.std_errors[1];
        assert!((fit.f_statistic.unwrap() - t * t).abs() < 1e-6 * t * t);
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let n = 50;
        let design = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * 7) % 11) as f64,
        });
        let y: Vec<f64> = (0..n).map(|i| ((i * i) % 17) as f64).collect();
        let fit = ols(&design, &y).unwrap();
        for j in 0..3 {
            let dot: f64 = (0..n).map(|i| design[(i, j)] * fit.residuals[i]).sum();
            assert!(dot.abs() < 1e-6 * n as f64);
        }
    }

    #[test]
    fn collinear_is_singular() {
        let design = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { 2.0 + 0.0 * i as f64 });
        assert!(matches!(ols(&design, &[1.0; 10]), Err(ModelError::Singular(_))));
    }
}
