//! Bayesian negative-binomial local-level model.
//!
//! ```text
//! x_t ~ Normal(φ · ln(1 + y_{t-1}), σ_w)          t = 2..n
//! y_t ~ NB(mean exp(α + x_t), shape r)
//! ```
//!
//! Fitted by adaptive random-walk Metropolis-within-Gibbs.

mod diagnostics;
mod nb;
mod predict;
mod quadrature;
mod sampler;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::CountSeries;

pub use diagnostics::{diagnostics, effective_sample_size, split_rhat, DiagnosticsReport, ParameterDiagnostic};
pub use nb::{nb_log_pmf, sample_nb};
pub use predict::predict_one_step;
pub use sampler::{fit_bssm, fit_tempered};

/// Minimum series length accepted by the sampler.
pub const MIN_WEEKS: usize = 20;

#[derive(Debug, Error)]
pub enum BssmError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("series has no nonzero counts")]
    AllZero,
    #[error("series too short: need at least {need} weeks, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("diagnostics need at least 2 chains, got {0}")]
    SingleChain(usize),
    #[error("posterior samples do not belong to this series: {0}")]
    SeriesMismatch(String),
    #[error("sampler failure: {0}")]
    Numerical(String),
}

impl BssmError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, BssmError::Numerical(_))
    }
}

/// Prior hyperparameters. σ_w is Half-Normal with the given scale and r is
/// Gamma with shape/rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub phi_mean: f64,
    pub phi_sd: f64,
    pub sigma_w_scale: f64,
    pub shape_shape: f64,
    pub shape_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            alpha_mean: 0.0,
            alpha_sd: 5.0,
            phi_mean: 0.0,
            phi_sd: 2.0,
            sigma_w_scale: 1.0,
            shape_shape: 2.0,
            shape_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssmConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub priors: Priors,
    pub credible_level: f64,
    /// Hold φ at a constant instead of sampling it.
    pub fixed_phi: Option<f64>,
    /// Hold σ_w at a constant; zero collapses x_t onto its mean.
    pub fixed_sigma_w: Option<f64>,
}

impl Default for BssmConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 3000,
            warmup: 1000,
            seed: 20_190_101,
            priors: Priors::default(),
            credible_level: 0.95,
            fixed_phi: None,
            fixed_sigma_w: None,
        }
    }
}

impl BssmConfig {
    pub fn validate(&self) -> Result<(), BssmError> {
        let bad = |field: &'static str, message: String| Err(BssmError::Config { field, message });
        if self.chains < 2 {
            return bad("chains", format!("must be at least 2, got {}", self.chains));
        }
        if self.iterations == 0 {
            return bad("iterations", "must be positive".into());
        }
        if self.warmup >= self.iterations {
            return bad(
                "warmup",
                format!("must be below iterations ({} >= {})", self.warmup, self.iterations),
            );
        }
        if 4 * self.warmup < self.iterations {
            return bad(
                "warmup",
                format!("must be at least iterations/4 ({} < {}/4)", self.warmup, self.iterations),
            );
        }
        if !(self.credible_level > 0.0 && self.credible_level < 1.0) {
            return bad("credible_level", format!("must be in (0, 1), got {}", self.credible_level));
        }
        let p = &self.priors;
        let positive = [
            ("prior_alpha_sd", p.alpha_sd),
            ("prior_phi_sd", p.phi_sd),
            ("prior_sigma_w_scale", p.sigma_w_scale),
            ("prior_shape_shape", p.shape_shape),
            ("prior_shape_rate", p.shape_rate),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        if !(p.alpha_mean.is_finite() && p.phi_mean.is_finite()) {
            return bad("prior_alpha_mean", "prior means must be finite".into());
        }
        if let Some(phi) = self.fixed_phi {
            if !phi.is_finite() {
                return bad("fixed_phi", format!("must be finite, got {phi}"));
            }
        }
        if let Some(s) = self.fixed_sigma_w {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("fixed_sigma_w", format!("must be non-negative, got {s}"));
            }
        }
        Ok(())
    }
}

/// Acceptance rate of one move type in one chain after warmup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveAcceptance {
    pub chain: usize,
    pub name: String,
    pub rate: f64,
}

/// One posterior draw of the parameters and latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub alpha: f64,
    pub phi: f64,
    pub sigma_w: f64,
    pub shape_r: f64,
    /// `x_2..x_n`.
    pub latent_x: Vec<f64>,
}

/// Retained draws, ordered by `(chain_id, draw_id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma_w: Vec<f64>,
    pub shape_r: Vec<f64>,
    /// Per draw, `x_2..x_n`.
    pub latent_x: Vec<Vec<f64>>,
    /// Untempered `Σ_t ln p(y_t | θ, x_t)` per draw.
    pub log_lik: Vec<f64>,
    pub chain_id: Vec<usize>,
    pub draw_id: Vec<usize>,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub inverse_temperature: f64,
    pub seed: u64,
    pub fixed_phi: bool,
    pub fixed_sigma_w: bool,
    pub acceptance: Vec<MoveAcceptance>,
    pub warnings: Vec<String>,
    n_weeks: usize,
    fingerprint: u64,
}

fn series_fingerprint(series: &CountSeries) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &c in series.counts() {
        for b in c.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// `ln(1 + y)` of every count but the last: the lagged regressor for `t = 2..n`.
pub(crate) fn lagged_transform(series: &CountSeries) -> Vec<f64> {
    let c = series.counts();
    c[..c.len().saturating_sub(1)]
        .iter()
        .map(|&y| (y as f64).ln_1p())
        .collect()
}

pub(crate) fn series_log_lik(series: &CountSeries, alpha: f64, latent_x: &[f64], r: f64) -> f64 {
    series.counts()[1..]
        .iter()
        .zip(latent_x)
        .map(|(&y, &x)| nb::nb_log_pmf_unchecked(y as f64, alpha + x, r))
        .sum()
}

impl PosteriorSamples {
    /// Assemble samples from explicit draws, one inner vector per chain.
    /// Every chain must hold the same number of draws.
    pub fn from_draws(series: &CountSeries, chains: Vec<Vec<Draw>>) -> Result<Self, BssmError> {
        let n = series.len();
        if n < 2 {
            return Err(BssmError::TooShort { need: 2, got: n });
        }
        let per = chains.first().map_or(0, Vec::len);
        if per == 0 || chains.iter().any(|c| c.len() != per) {
            return Err(BssmError::Domain("chains must be non-empty and of equal length".into()));
        }
        let mut s = Self::empty(series, chains.len(), per, 1.0, 0);
        for (ci, chain) in chains.into_iter().enumerate() {
            for (di, d) in chain.into_iter().enumerate() {
                if d.latent_x.len() != n - 1 {
                    return Err(BssmError::Domain(format!(
                        "draw has {} latent states, series needs {}",
                        d.latent_x.len(),
                        n - 1
                    )));
                }
                if !(d.shape_r > 0.0) || !(d.sigma_w >= 0.0) {
                    return Err(BssmError::Domain("shape must be positive and sigma_w non-negative".into()));
                }
                let ll = series_log_lik(series, d.alpha, &d.latent_x, d.shape_r);
                s.push(ci, di, d, ll);
            }
        }
        Ok(s)
    }

    pub(crate) fn empty(
        series: &CountSeries,
        n_chains: usize,
        draws_per_chain: usize,
        inverse_temperature: f64,
        seed: u64,
    ) -> Self {
        let cap = n_chains * draws_per_chain;
        Self {
            alpha: Vec::with_capacity(cap),
            phi: Vec::with_capacity(cap),
            sigma_w: Vec::with_capacity(cap),
            shape_r: Vec::with_capacity(cap),
            latent_x: Vec::with_capacity(cap),
            log_lik: Vec::with_capacity(cap),
            chain_id: Vec::with_capacity(cap),
            draw_id: Vec::with_capacity(cap),
            n_chains,
            draws_per_chain,
            inverse_temperature,
            seed,
            fixed_phi: false,
            fixed_sigma_w: false,
            acceptance: Vec::new(),
            warnings: Vec::new(),
            n_weeks: series.len(),
            fingerprint: series_fingerprint(series),
        }
    }

    pub(crate) fn push(&mut self, chain: usize, draw: usize, d: Draw, log_lik: f64) {
        self.alpha.push(d.alpha);
        self.phi.push(d.phi);
        self.sigma_w.push(d.sigma_w);
        self.shape_r.push(d.shape_r);
        self.latent_x.push(d.latent_x);
        self.log_lik.push(log_lik);
        self.chain_id.push(chain);
        self.draw_id.push(draw);
    }

    pub fn n_draws(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.n_weeks
    }

    pub fn check_series(&self, series: &CountSeries) -> Result<(), BssmError> {
        if series.len() != self.n_weeks || series_fingerprint(series) != self.fingerprint {
            return Err(BssmError::SeriesMismatch(format!(
                "fitted on {} weeks, given {}",
                self.n_weeks,
                series.len()
            )));
        }
        Ok(())
    }

    /// Draws of one scalar split by chain.
    pub fn chains_of(&self, values: &[f64]) -> Vec<Vec<f64>> {
        values
            .chunks(self.draws_per_chain.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn mean_of(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// Equal-tailed interval of a scalar's draws (type-7 quantiles).
    pub fn interval_of(values: &[f64], level: f64) -> (f64, f64) {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
    }

    /// `-E[Σ ln p(y_t | θ, x_t)]` over the retained draws.
    pub fn expected_neg_log_lik(&self) -> f64 {
        -Self::mean_of(&self.log_lik)
    }

    /// One CSV row per draw: `chain,draw,alpha,phi,sigma_w,shape_r,log_lik,x_2..x_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["chain", "draw", "alpha", "phi", "sigma_w", "shape_r", "log_lik"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((2..=self.n_weeks).map(|t| format!("x_{t}")));
        w.write_record(&header)?;
        for i in 0..self.n_draws() {
            let mut rec = vec![
                self.chain_id[i].to_string(),
                self.draw_id[i].to_string(),
                self.alpha[i].to_string(),
                self.phi[i].to_string(),
                self.sigma_w[i].to_string(),
                self.shape_r[i].to_string(),
                self.log_lik[i].to_string(),
            ];
            rec.extend(self.latent_x[i].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// WBIC on both scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wbic {
    pub natural: f64,
    pub deviance: f64,
    pub inverse_temperature: f64,
}

impl Wbic {
    pub fn from_samples(samples: &PosteriorSamples) -> Self {
        let natural = samples.expected_neg_log_lik();
        Self {
            natural,
            deviance: 2.0 * natural,
            inverse_temperature: samples.inverse_temperature,
        }
    }
}

/// Runs tempered chains at `β = 1/ln(n_obs)`, where `n_obs = n - 1` is the
/// number of likelihood terms.
pub fn wbic(series: &CountSeries, config: &BssmConfig) -> Result<Wbic, BssmError> {
    let n_obs = series.len().saturating_sub(1).max(2);
    let beta = 1.0 / (n_obs as f64).ln();
    let samples = fit_tempered(series, config, beta)?;
    Ok(Wbic::from_samples(&samples))
}

/// Parameter values of the model, for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub phi: f64,
    pub sigma_w: f64,
    pub shape_r: f64,
}

impl ModelParams {
    /// A series of length `n` whose first count is `first`; later weeks
    /// follow the model. The first week is conditioned on, never modeled.
    pub fn simulate<R: rand::Rng + ?Sized>(&self, rng: &mut R, first: u64, n: usize) -> Vec<u64> {
        use rand_distr::{Distribution, StandardNormal};
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        out.push(first);
        for t in 1..n {
            let z: f64 = StandardNormal.sample(rng);
            let x = self.phi * (out[t - 1] as f64).ln_1p() + self.sigma_w * z;
            out.push(sample_nb(rng, (self.alpha + x).exp(), self.shape_r));
        }
        out
    }
}
