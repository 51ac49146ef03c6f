use rand_distr::{Distribution, StandardNormal};

use super::{lagged_transform, sample_nb, BssmError, PosteriorSamples};
use crate::forecast::{ForecastRow, ForecastSeries};
use crate::rng::component_rng;
use crate::series::CountSeries;

pub const MODEL_LABEL: &str = "BSSM";

/// One-week-ahead posterior predictive for weeks `2..n`.
///
/// Each retained draw contributes one predictive count, drawn with its own
/// fresh state `x ~ N(φ g(y_{t−1}), σ_w)`. The point forecast is the
/// predictive mean `E[exp(α + φ g + σ_w²/2)]` computed in closed form over
/// the draws; the median and bounds are empirical quantiles of the draws.
/// The predictive stream of each week depends only on the fit seed and the
/// week, so intervals at different levels come from the same draws.
pub fn predict_one_step(
    samples: &PosteriorSamples,
    series: &CountSeries,
    level: f64,
) -> Result<ForecastSeries, BssmError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BssmError::Domain(format!("credible level must be in (0, 1), got {level}")));
    }
    samples.check_series(series)?;
    if samples.n_draws() == 0 {
        return Err(BssmError::Domain("no posterior draws".into()));
    }
    let counts = series.counts();
    let g = lagged_transform(series);
    let tail = (1.0 - level) / 2.0;
    let nd = samples.n_draws();

    let mut rows = Vec::with_capacity(counts.len());
    if let Some(&first) = counts.first() {
        rows.push(ForecastRow::missing(1, first));
    }
    let mut draws = Vec::with_capacity(nd);
    for (i, &gt) in g.iter().enumerate() {
        let week = i + 2;
        let mut rng = component_rng(samples.seed, "predict", week as u64);
        draws.clear();
        let mut mean = 0.0;
        for d in 0..nd {
            let (a, phi, s, r) = (samples.alpha[d], samples.phi[d], samples.sigma_w[d], samples.shape_r[d]);
            let z: f64 = StandardNormal.sample(&mut rng);
            let mu = (a + phi * gt + s * z).exp();
            draws.push(sample_nb(&mut rng, mu, r));
            mean += (a + phi * gt + 0.5 * s * s).exp();
        }
        mean /= nd as f64;
        if !mean.is_finite() {
            return Err(BssmError::Numerical(format!("predictive mean overflows at week {week}")));
        }
        draws.sort_unstable();
        let q = |p: f64| inverse_ecdf(&draws, p) as f64;
        rows.push(ForecastRow {
            week,
            actual: counts[i + 1],
            point: Some(mean),
            median: Some(q(0.5)),
            lower: Some(q(tail)),
            upper: Some(q(1.0 - tail)),
        });
    }
    Ok(ForecastSeries {
        model: MODEL_LABEL.to_string(),
        rows,
    })
}

/// Smallest sample value whose empirical CDF reaches `p`.
fn inverse_ecdf(sorted: &[u64], p: f64) -> u64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bssm::Draw;

    fn degenerate(series: &CountSeries, alpha: f64) -> PosteriorSamples {
        let d = Draw {
            alpha,
            phi: 0.0,
            sigma_w: 0.0,
            shape_r: 3.0,
            latent_x: vec![0.0; series.len() - 1],
        };
        PosteriorSamples::from_draws(series, vec![vec![d]]).unwrap()
    }

    #[test]
    fn inverse_ecdf_definition() {
        let v = [1, 2, 3, 4];
        assert_eq!(inverse_ecdf(&v, 0.25), 1);
        assert_eq!(inverse_ecdf(&v, 0.26), 2);
        assert_eq!(inverse_ecdf(&v, 0.5), 2);
        assert_eq!(inverse_ecdf(&v, 1.0), 4);
        assert_eq!(inverse_ecdf(&v, 0.0), 1);
    }

    #[test]
    fn degenerate_posterior_predicts_exp_alpha() {
        let s = CountSeries::new(vec![4, 0, 9, 2, 7, 1], "d");
        let f = predict_one_step(&degenerate(&s, 1.5), &s, 0.95).unwrap();
        assert_eq!(f.rows.len(), 6);
        assert!(f.rows[0].point.is_none());
        for r in &f.rows[1..] {
            assert_eq!(r.point, Some(1.5f64.exp()));
        }
        assert_eq!(f.defined_from(), Some(2));
    }

    #[test]
    fn level_validation() {
        let s = CountSeries::new(vec![4, 0, 9], "d");
        let p = degenerate(&s, 0.0);
        assert!(predict_one_step(&p, &s, 1.0).is_err());
        assert!(predict_one_step(&p, &s, 0.0).is_err());
    }
}
