use nalgebra::{DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::ar::fit_ar;
use super::ols::ols;
use super::ModelError;
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// ARMA(p, q) with intercept, fitted by conditional sum of squares:
/// `x_t = c + Σ φ_i x_{t-i} + e_t + Σ θ_j e_{t-j}`, pre-sample innovations 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARMAModel {
    pub order_p: usize,
    pub order_q: usize,
    pub intercept: f64,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub noise_variance: f64,
    pub aic: f64,
    /// All roots of the AR polynomial lie outside the unit circle.
    pub stationary: bool,
    /// All roots of the MA polynomial lie outside the unit circle.
    pub invertible: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

impl ARMAModel {
    fn params(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.ar_coeffs);
        v.extend(&self.ma_coeffs);
        v
    }

    /// CSS innovations for `xs` under this model (zero before index `p`).
    pub fn innovations(&self, xs: &[f64]) -> Vec<f64> {
        innovations(xs, self.order_p, self.order_q, &self.params())
    }

    /// One-step predictions; `None` for the first `order_p` positions.
    pub fn predict_one_step(&self, xs: &[f64]) -> Vec<Option<f64>> {
        let e = self.innovations(xs);
        (0..xs.len())
            .map(|t| (t >= self.order_p).then(|| xs[t] - e[t]))
            .collect()
    }
}

fn innovations(xs: &[f64], p: usize, q: usize, params: &[f64]) -> Vec<f64> {
    let c = params[0];
    let phi = &params[1..1 + p];
    let theta = &params[1 + p..1 + p + q];
    let mut e = vec![0.0; xs.len()];
    for t in p..xs.len() {
        let mut pred = c;
        for (i, ph) in phi.iter().enumerate() {
            pred += ph * xs[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = xs[t] - pred;
    }
    e
}

fn css(xs: &[f64], p: usize, q: usize, params: &[f64]) -> f64 {
    innovations(xs, p, q, params)[p..].iter().map(|e| e * e).sum()
}

/// Roots of `1 - Σ a_i z^i` all outside the unit circle, via companion eigenvalues.
fn roots_outside_unit_circle(coeffs: &[f64]) -> bool {
    let k = coeffs.len();
    if k == 0 {
        return true;
    }
    let companion = DMatrix::from_fn_generic(Dyn(k), Dyn(k), |i, j| {
        if i == 0 {
            coeffs[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .all(|ev| ev.norm() < 1.0)
}

/// Hannan–Rissanen style starting values: long AR residuals as proxies for
/// the innovations, then one OLS pass.
fn starting_values(xs: &[f64], p: usize, q: usize) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let mut fallback = vec![0.0; 1 + p + q];
    fallback[0] = mean;
    if q == 0 {
        return fit_ar(xs, p)
            .map(|m| {
                let mut v = vec![m.intercept];
                v.extend(m.coefficients);
                v
            })
            .unwrap_or(fallback);
    }
    let long = (p + q + 5).max(10).min(n / 10);
    let Ok(long_ar) = fit_ar(xs, long) else {
        return fallback;
    };
    let pred = long_ar.predict_one_step(xs);
    let ehat: Vec<f64> = xs
        .iter()
        .zip(&pred)
        .map(|(x, p)| p.map_or(0.0, |v| x - v))
        .collect();
    let start = long + q;
    if n <= start + 1 + p + q {
        return fallback;
    }
    let rows = n - start;
    let design = DMatrix::from_fn(rows, 1 + p + q, |i, j| {
        let t = i + start;
        if j == 0 {
            1.0
        } else if j <= p {
            xs[t - j]
        } else {
            ehat[t - (j - p)]
        }
    });
    match ols(&design, &xs[start..]) {
        Ok(fit) => {
            let mut v = fit.coefficients;
            // keep the MA part strictly invertible for the recursion
            for th in &mut v[1 + p..] {
                *th = th.clamp(-0.95, 0.95);
            }
            v
        }
        Err(_) => fallback,
    }
}

pub fn fit_arma(xs: &[f64], order_p: usize, order_q: usize) -> Result<ARMAModel, ModelError> {
    fit_arma_with(xs, order_p, order_q, NelderMeadOptions::default())
}

pub fn fit_arma_with(
    xs: &[f64],
    order_p: usize,
    order_q: usize,
    opts: NelderMeadOptions,
) -> Result<ARMAModel, ModelError> {
    let (p, q) = (order_p, order_q);
    if p == 0 && q == 0 {
        return Err(ModelError::InvalidOrder { p, q });
    }
    let n = xs.len();
    if n <= 10 * (p + q) {
        return Err(ModelError::TooShort {
            need: 10 * (p + q),
            got: n,
        });
    }
    let x0 = starting_values(xs, p, q);
    let sd = {
        let mean = xs.iter().sum::<f64>() / n as f64;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let mut step = vec![0.1; 1 + p + q];
    step[0] = 0.1 * sd.max(1e-3);

    let objective = |params: &[f64]| css(xs, p, q, params);
    let res = nelder_mead(objective, &x0, &step, opts);
    if !res.converged {
        return Err(ModelError::NonConvergence {
            best: res.x,
            final_step: res.final_step,
            iterations: res.iterations,
        });
    }
    let n_eff = n - p;
    let sigma2 = res.fval / n_eff as f64;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(ModelError::Singular(format!(
            "innovation variance {sigma2} is degenerate"
        )));
    }
    let aic = n_eff as f64 * sigma2.ln() + 2.0 * (p + q + 1) as f64;
    let ar_coeffs = res.x[1..1 + p].to_vec();
    let ma_coeffs = res.x[1 + p..].to_vec();
    let neg_ma: Vec<f64> = ma_coeffs.iter().map(|t| -t).collect();
    Ok(ARMAModel {
        order_p: p,
        order_q: q,
        intercept: res.x[0],
        stationary: roots_outside_unit_circle(&ar_coeffs),
        invertible: roots_outside_unit_circle(&neg_ma),
        ar_coeffs,
        ma_coeffs,
        noise_variance: sigma2,
        aic,
        iterations: res.iterations,
        n_obs: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaGridCell {
    pub p: usize,
    pub q: usize,
    pub aic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSelection {
    pub p: usize,
    pub q: usize,
    pub model: ARMAModel,
    pub grid: Vec<ArmaGridCell>,
}

impl ArmaSelection {
    pub fn order(&self) -> (usize, usize) {
        (self.p, self.q)
    }
}

/// AIC grid search over `0..=p_max` × `0..=q_max` (excluding (0, 0)).
/// Ties go to the smaller `p + q`, then the smaller `q`.
pub fn select_arma(xs: &[f64], p_max: usize, q_max: usize) -> Result<ArmaSelection, ModelError> {
    if p_max > 3 || q_max > 3 {
        return Err(ModelError::InvalidArgument(format!(
            "grid limits ({p_max}, {q_max}) exceed 3"
        )));
    }
    let orders: Vec<(usize, usize)> = (0..=p_max)
        .flat_map(|p| (0..=q_max).map(move |q| (p, q)))
        .filter(|&o| o != (0, 0))
        .collect();
    let fits: Vec<Result<ARMAModel, ModelError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = orders
            .iter()
            .map(|&(p, q)| scope.spawn(move || fit_arma(xs, p, q)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ARMA fit thread panicked"))
            .collect()
    });

    let mut grid = Vec::with_capacity(orders.len());
    let mut best: Option<ARMAModel> = None;
    for (&(p, q), fit) in orders.iter().zip(fits) {
        match fit {
            Ok(m) => {
                grid.push(ArmaGridCell {
                    p,
                    q,
                    aic: Some(m.aic),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let key = |m: &ARMAModel| (m.order_p + m.order_q, m.order_q);
                        m.aic < b.aic || (m.aic == b.aic && key(&m) < key(b))
                    }
                };
                if better {
                    best = Some(m);
                }
            }
            Err(e) => grid.push(ArmaGridCell {
                p,
                q,
                aic: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let model = best.ok_or(ModelError::NoConvergedOrder)?;
    Ok(ArmaSelection {
        p: model.order_p,
        q: model.order_q,
        model,
        grid,
    })
}
