//! Per-week integrals over the latent state:
//! `∫ NB(y | e^η, r)^β · N(η; μ, σ) dη`, log-concave in η.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::nb::nb_kernel_with_log_r;

pub(crate) const GH_NODES: usize = 14;

/// Gauss–Hermite nodes and weights for weight `e^{−u²}` (Golub–Welsch).
pub(crate) fn gauss_hermite(k: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(k, k, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(GH_NODES))
}

/// Log integrand without the η-free constants:
/// `β · kernel(y, η, r) − (η − μ)² / (2σ²)`.
#[derive(Clone, Copy)]
pub(crate) struct Integrand {
    y: f64,
    r: f64,
    log_r: f64,
    mu: f64,
    sigma: f64,
    inv_var: f64,
    beta: f64,
}

impl Integrand {
    #[cfg(test)]
    pub fn new(y: f64, r: f64, mu: f64, sigma: f64, beta: f64) -> Self {
        Self::with_log_r(y, r, r.ln(), mu, sigma, beta)
    }

    #[inline]
    pub fn with_log_r(y: f64, r: f64, log_r: f64, mu: f64, sigma: f64, beta: f64) -> Self {
        Self {
            y,
            r,
            log_r,
            mu,
            sigma,
            inv_var: 1.0 / (sigma * sigma),
            beta,
        }
    }

    #[inline]
    pub fn value(&self, eta: f64) -> f64 {
        let d = eta - self.mu;
        self.beta * nb_kernel_with_log_r(self.y, eta, self.r, self.log_r) - 0.5 * d * d * self.inv_var
    }

    /// First and second derivatives.
    #[inline]
    fn derivs(&self, eta: f64) -> (f64, f64) {
        // p = e^η / (r + e^η)
        let p = 1.0 / (1.0 + (self.log_r - eta).exp());
        let d1 = self.beta * (self.y - (self.r + self.y) * p) - (eta - self.mu) * self.inv_var;
        let d2 = -self.beta * (self.r + self.y) * p * (1.0 - p) - self.inv_var;
        (d1, d2)
    }

    /// Unique maximizer by safeguarded Newton from `start`.
    pub fn mode(&self, start: f64) -> f64 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut x = if start.is_finite() { start } else { self.mu };
        for _ in 0..100 {
            let (d1, d2) = self.derivs(x);
            if d1 > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - d1 / d2;
            let step_cap = 2.0 * self.sigma.max(0.5);
            next = next.clamp(x - step_cap, x + step_cap);
            if next <= lo || next >= hi {
                if lo.is_finite() && hi.is_finite() {
                    next = 0.5 * (lo + hi);
                } else if next <= lo {
                    next = lo + step_cap;
                } else {
                    next = hi - step_cap;
                }
            }
            if (next - x).abs() < 1e-11 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }

    /// `ln ∫ exp(value(η)) dη` and the mode used.
    pub fn log_integral(&self, start: f64) -> (f64, f64) {
        let m = self.mode(start);
        let (_, d2) = self.derivs(m);
        let s = (-1.0 / d2).sqrt();
        let scale = std::f64::consts::SQRT_2 * s;
        let f0 = self.value(m);
        let (nodes, weights) = rule();
        let sum: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(&u, &w)| w * (self.value(m + scale * u) - f0 + u * u).exp())
            .sum();
        (f0 + (scale * sum).ln(), m)
    }

    /// Exact draw from the normalized integrand. The log integrand has
    /// curvature at most `−1/σ²`, so `N(mode, σ)` scaled by the peak height
    /// is an envelope.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mode: f64) -> f64 {
        let f0 = self.value(mode);
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let eta = mode + self.sigma * z;
            let log_accept = self.value(eta) - f0 + 0.5 * z * z;
            if rng.random::<f64>().ln() < log_accept {
                return eta;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(GH_NODES);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let moment = |k: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(k)).sum::<f64>();
        assert!((moment(0) - pi_sqrt).abs() < 1e-12);
        assert!(moment(1).abs() < 1e-12);
        assert!((moment(2) - pi_sqrt / 2.0).abs() < 1e-12);
        assert!((moment(4) - 3.0 * pi_sqrt / 4.0).abs() < 1e-11);
        // exact through degree 2K - 1: the integral of x^(2j) e^(-x^2) is Γ(j + 1/2)
        let j = GH_NODES as i32 - 1;
        let want = crate::special::ln_gamma(j as f64 + 0.5).exp();
        assert!((moment(2 * j) - want).abs() < 1e-9 * want);
    }

    /// Trapezoid rule on a wide fine grid.
    fn brute(f: &Integrand) -> f64 {
        let m = f.mode(f.mu);
        let (lo, hi, k) = (m - 12.0, m + 12.0, 200_000);
        let h = (hi - lo) / k as f64;
        let peak = f.value(m);
        let s: f64 = (0..=k)
            .map(|i| {
                let w = if i == 0 || i == k { 0.5 } else { 1.0 };
                w * (f.value(lo + i as f64 * h) - peak).exp()
            })
            .sum();
        peak + (s * h).ln()
    }

    #[test]
    fn log_integral_matches_brute_force() {
        for &(y, r, mu, sigma, beta) in &[
            (0.0, 3.0, 1.0, 0.5, 1.0),
            (25.0, 5.0, 2.5, 0.2, 1.0),
            (140.0, 2.0, 3.0, 1.0, 1.0),
            (7.0, 0.8, 0.0, 2.0, 0.17),
            (300.0, 50.0, 1.0, 0.05, 1.0),
        ] {
            let f = Integrand::new(y, r, mu, sigma, beta);
            let (got, _) = f.log_integral(mu);
            let want = brute(&f);
            assert!((got - want).abs() < 1e-6, "{y} {r} {mu} {sigma}: {got} vs {want}");
        }
    }

    #[test]
    fn mode_is_stationary_from_any_start() {
        let f = Integrand::new(60.0, 4.0, -1.0, 0.7, 1.0);
        let a = f.mode(-30.0);
        let b = f.mode(40.0);
        assert!((a - b).abs() < 1e-9);
        assert!(f.derivs(a).0.abs() < 1e-8);
    }

    #[test]
    fn exact_sampler_matches_moments() {
        let f = Integrand::new(12.0, 3.0, 1.0, 0.8, 1.0);
        let m = f.mode(f.mu);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..100_000).map(|_| f.sample(&mut rng, m)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let (lo, hi, k) = (m - 10.0, m + 10.0, 100_000);
        let h = (hi - lo) / k as f64;
        let (mut z, mut first) = (0.0, 0.0);
        for i in 0..=k {
            let x = lo + i as f64 * h;
            let p = (f.value(x) - f.value(m)).exp();
            z += p;
            first += p * x;
        }
        let want = first / z;
        assert!((mean - want).abs() < 0.01, "{mean} vs {want}");
    }
}
