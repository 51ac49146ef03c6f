use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ols::ols;
use super::ModelError;

/// Autoregression fitted by conditional least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARModel {
    pub order_p: usize,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub noise_variance: f64,
    /// Length of the series the model was fitted on.
    pub n_obs: usize,
}

impl ARModel {
    /// One-step predictions; `None` for the first `order_p` positions.
    pub fn predict_one_step(&self, xs: &[f64]) -> Vec<Option<f64>> {
        let p = self.order_p;
        (0..xs.len())
            .map(|t| {
                (t >= p).then(|| {
                    self.intercept
                        + self
                            .coefficients
                            .iter()
                            .enumerate()
                            .map(|(i, phi)| phi * xs[t - 1 - i])
                            .sum::<f64>()
                })
            })
            .collect()
    }
}

pub fn fit_ar(xs: &[f64], order_p: usize) -> Result<ARModel, ModelError> {
    if order_p == 0 {
        return Err(ModelError::InvalidOrder { p: 0, q: 0 });
    }
    if xs.len() <= 10 * order_p {
        return Err(ModelError::TooShort {
            need: 10 * order_p,
            got: xs.len(),
        });
    }
    let n = xs.len();
    let rows = n - order_p;
    let design = DMatrix::from_fn(rows, order_p + 1, |i, j| {
        let t = i + order_p;
        if j == 0 {
            1.0
        } else {
            xs[t - j]
        }
    });
    let fit = ols(&design, &xs[order_p..])?;
    Ok(ARModel {
        order_p,
        intercept: fit.coefficients[0],
        coefficients: fit.coefficients[1..].to_vec(),
        noise_variance: fit.rss / fit.df.1 as f64,
        n_obs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn recovers_ar1() {
        let m = fit_ar(&ar1(0.8, 5000, 1), 1).unwrap();
        assert!((0.77..=0.83).contains(&m.coefficients[0]), "{}", m.coefficients[0]);
        assert!(m.noise_variance > 0.0);
    }

    #[test]
    fn white_noise_near_zero() {
        let m = fit_ar(&ar1(0.0, 5000, 2), 1).unwrap();
        assert!(m.coefficients[0].abs() < 0.05);
    }

    #[test]
    fn constant_is_singular() {
        assert!(matches!(fit_ar(&[4.0; 50], 1), Err(ModelError::Singular(_))));
        assert!(matches!(fit_ar(&[1.0; 10], 1), Err(ModelError::TooShort { .. })));
    }

    #[test]
    fn one_step_is_linear_recursion() {
        let xs = ar1(0.5, 200, 3);
        let m = fit_ar(&xs, 1).unwrap();
        let pred = m.predict_one_step(&xs);
        assert!(pred[0].is_none());
        for t in 1..xs.len() {
            assert_eq!(pred[t].unwrap(), m.intercept + m.coefficients[0] * xs[t - 1]);
        }
    }
}
