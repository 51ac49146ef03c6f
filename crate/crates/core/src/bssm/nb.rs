//! Negative binomial in the mean/shape parameterization:
//! `Var = μ + μ²/r`, equivalently `NB(n = r, p = r / (r + μ))`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::BssmError;
use crate::special::ln_gamma;

/// `ln P(Y = y)` for `Y ~ NB(mean μ, shape r)`.
pub fn nb_log_pmf(y: u64, mean_mu: f64, shape_r: f64) -> Result<f64, BssmError> {
    if !(mean_mu > 0.0) || !mean_mu.is_finite() {
        return Err(BssmError::Domain(format!("mean must be positive, got {mean_mu}")));
    }
    if !(shape_r > 0.0) || !shape_r.is_finite() {
        return Err(BssmError::Domain(format!("shape must be positive, got {shape_r}")));
    }
    Ok(nb_log_pmf_unchecked(y as f64, mean_mu.ln(), shape_r))
}

/// Log PMF with the mean given on the log scale; no argument checks.
pub(crate) fn nb_log_pmf_unchecked(y: f64, log_mu: f64, r: f64) -> f64 {
    ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) + nb_kernel(y, log_mu, r) + r * r.ln()
}

/// The part of the log PMF that depends on μ, plus `-(r) ln(r + μ)`:
/// `y ln μ − (r + y) ln(r + μ)`.
#[inline]
pub(crate) fn nb_kernel(y: f64, log_mu: f64, r: f64) -> f64 {
    nb_kernel_with_log_r(y, log_mu, r, r.ln())
}

#[inline]
pub(crate) fn nb_kernel_with_log_r(y: f64, log_mu: f64, r: f64, log_r: f64) -> f64 {
    // ln(r + e^η) without overflow
    let log_sum = if log_mu > log_r {
        log_mu + (-(log_mu - log_r)).exp().ln_1p()
    } else {
        log_r + (log_mu - log_r).exp().ln_1p()
    };
    y * log_mu - (r + y) * log_sum
}

/// Gamma–Poisson draw from `NB(μ, r)`.
pub fn sample_nb<R: Rng + ?Sized>(rng: &mut R, mean_mu: f64, shape_r: f64) -> u64 {
    if !(mean_mu > 0.0) {
        return 0;
    }
    let lambda = Gamma::new(shape_r, mean_mu / shape_r)
        .map(|g| g.sample(rng))
        .unwrap_or(mean_mu);
    if !(lambda > 0.0) {
        return 0;
    }
    // Poisson rejects enormous rates; such draws only arise from runaway proposals
    let lambda = lambda.min(1e15);
    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poisson_log_pmf(y: u64, lambda: f64) -> f64 {
        y as f64 * lambda.ln() - lambda - ln_gamma(y as f64 + 1.0)
    }

    #[test]
    fn zero_count_closed_form() {
        for &(mu, r) in &[(5.0f64, 2.0f64), (0.3, 7.5), (120.0, 0.4)] {
            let want: f64 = r * (r / (r + mu)).ln();
            let got = nb_log_pmf(0, mu, r).unwrap();
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} {want}");
        }
    }

    #[test]
    fn poisson_limit() {
        let (mu, r) = (5.0, 1e6);
        for y in 0..20 {
            let nb = nb_log_pmf(y, mu, r).unwrap();
            let po = poisson_log_pmf(y, mu);
            assert!((nb - po).abs() < 1e-4, "y={y}: {nb} vs {po}");
        }
        // the gap itself follows the first-order expansion in 1/r
        for y in 0..=30u64 {
            let gap = nb_log_pmf(y, mu, r).unwrap() - poisson_log_pmf(y, mu);
            let yf = y as f64;
            let first_order = ((yf - mu).powi(2) - yf) / (2.0 * r);
            assert!((gap - first_order).abs() < 1e-8, "y={y}: {gap} vs {first_order}");
        }
    }

    #[test]
    fn normalizes() {
        for &(mu, r) in &[(5.0, 2.0), (25.0, 1.6), (1.0, 10.0)] {
            let mut total = 0.0;
            let mut y = 0u64;
            loop {
                let p = nb_log_pmf(y, mu, r).unwrap().exp();
                total += p;
                // tail bound: terms past the mode decay geometrically
                if y as f64 > mu && p < 1e-13 {
                    break;
                }
                y += 1;
            }
            assert!((total - 1.0).abs() < 1e-9, "({mu}, {r}): {total}");
        }
    }

    #[test]
    fn matches_statrs_parameterization() {
        use statrs::distribution::{Discrete, NegativeBinomial};
        let (mu, r) = (7.0_f64, 2.5_f64);
        // statrs counts failures before r successes with success prob p
        let d = NegativeBinomial::new(r, r / (r + mu)).unwrap();
        for y in 0..40 {
            let want = d.ln_pmf(y);
            assert!((nb_log_pmf(y, mu, r).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(nb_log_pmf(1, 0.0, 1.0).is_err());
        assert!(nb_log_pmf(1, 1.0, -2.0).is_err());
        assert!(nb_log_pmf(1, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mu, r) = (12.0, 3.0);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_nb(&mut rng, mu, r) as f64).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m - mu).abs() < 0.1, "{m}");
        let want_v = mu + mu * mu / r;
        assert!((v - want_v).abs() / want_v < 0.03, "{v}");
    }
}
