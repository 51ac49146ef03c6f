//! Collapsed Metropolis-within-Gibbs.
//!
//! The parameters `θ = (a, φ, ln σ_w, ln r)` are moved against their
//! posterior with every latent state integrated out. Each latent integral
//! is one-dimensional and log-concave and is evaluated by Gauss–Hermite
//! quadrature centered on its mode. After each parameter update the states
//! `x_t` are drawn exactly from their conditionals, which are independent
//! across weeks given θ. Internally α is carried as `a = α + φ ḡ` with the
//! lagged regressor centered at its mean ḡ.
//!
//! Warmup iterations make one random-walk update per free coordinate and one
//! joint update whose covariance is learned from the second half of warmup.
//! Sampling iterations make joint updates only.
//! All proposal scales adapt during warmup and are frozen afterwards.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::nb::nb_log_pmf_unchecked;
use super::quadrature::Integrand;
use super::{
    lagged_transform, BssmConfig, BssmError, Draw, MoveAcceptance, PosteriorSamples, Priors, MIN_WEEKS,
};
use crate::rng::component_rng;
use crate::series::CountSeries;
use crate::special::ln_gamma;

const TARGET_SINGLE: f64 = 0.40;
const TARGET_JOINT: f64 = 0.30;
const ADAPT_BATCH: usize = 25;
const JOINT_MOVES: usize = 2;
const WARN_LOW: f64 = 0.05;
const WARN_HIGH: f64 = 0.95;

pub fn fit_bssm(series: &CountSeries, config: &BssmConfig) -> Result<PosteriorSamples, BssmError> {
    fit_tempered(series, config, 1.0)
}

/// Sample the posterior with the likelihood raised to `beta`.
pub fn fit_tempered(
    series: &CountSeries,
    config: &BssmConfig,
    beta: f64,
) -> Result<PosteriorSamples, BssmError> {
    config.validate()?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(BssmError::Domain(format!("inverse temperature must be in (0, 1], got {beta}")));
    }
    if series.len() < MIN_WEEKS {
        return Err(BssmError::TooShort {
            need: MIN_WEEKS,
            got: series.len(),
        });
    }
    if series.total() == 0 {
        return Err(BssmError::AllZero);
    }
    let component = if beta == 1.0 { "bssm" } else { "bssm-tempered" };
    let data = Data::new(series, beta);

    let runs: Vec<Result<ChainRun, BssmError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| {
                let data = &data;
                scope.spawn(move || {
                    let rng = component_rng(config.seed, component, c as u64);
                    run_chain(data, config, rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(BssmError::Numerical("chain panicked".into()))))
            .collect()
    });

    let per = config.iterations - config.warmup;
    let mut samples = PosteriorSamples::empty(series, config.chains, per, beta, config.seed);
    samples.fixed_phi = config.fixed_phi.is_some();
    samples.fixed_sigma_w = config.fixed_sigma_w.is_some();
    for (c, run) in runs.into_iter().enumerate() {
        let run = run?;
        for (name, rate) in run.acceptance {
            if !(WARN_LOW..=WARN_HIGH).contains(&rate) {
                samples.warnings.push(format!(
                    "chain {c}: {name} acceptance {rate:.3} outside [{WARN_LOW}, {WARN_HIGH}]"
                ));
            }
            samples.acceptance.push(MoveAcceptance {
                chain: c,
                name,
                rate,
            });
        }
        for (d, (draw, ll)) in run.draws.into_iter().enumerate() {
            samples.push(c, d, draw, ll);
        }
    }
    Ok(samples)
}

struct Data {
    /// `y_2..y_n`.
    y: Vec<f64>,
    /// Centered lagged regressor `g_t − ḡ`.
    h: Vec<f64>,
    g_mean: f64,
    sum_log_fact: f64,
    beta: f64,
}

impl Data {
    fn new(series: &CountSeries, beta: f64) -> Self {
        let g = lagged_transform(series);
        let g_mean = g.iter().sum::<f64>() / g.len() as f64;
        let y: Vec<f64> = series.counts()[1..].iter().map(|&v| v as f64).collect();
        Self {
            h: g.iter().map(|v| v - g_mean).collect(),
            sum_log_fact: y.iter().map(|&v| ln_gamma(v + 1.0)).sum(),
            y,
            g_mean,
            beta,
        }
    }

    fn m(&self) -> usize {
        self.y.len()
    }
}

/// Coordinates of θ in sampler space.
///
/// With σ_w free the two dispersion coordinates are `u = ln T` and
/// `v = logit w`, where `T = σ_w² + ln(1 + 1/r)` is the total log-scale
/// overdispersion and `w = σ_w² / T` the share carried by the latent state.
/// The posterior is a curved ridge in `(σ_w, r)` and nearly axis-aligned in
/// `(u, v)`. With σ_w fixed, `v = ln r` and `u` is unused.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Coord {
    A,
    Phi,
    U,
    V,
}

struct Model<'a> {
    data: &'a Data,
    priors: Priors,
    fixed_phi: Option<f64>,
    fixed_sigma: Option<f64>,
    /// Free coordinates in the order they appear in the parameter vector.
    free: Vec<Coord>,
}

/// Full parameter point; fixed coordinates hold their fixed values.
#[derive(Clone, Copy, Debug)]
struct Theta {
    a: f64,
    phi: f64,
    u: f64,
    v: f64,
}

impl Theta {
    fn get(&self, c: Coord) -> f64 {
        match c {
            Coord::A => self.a,
            Coord::Phi => self.phi,
            Coord::U => self.u,
            Coord::V => self.v,
        }
    }

    fn set(&mut self, c: Coord, v: f64) {
        match c {
            Coord::A => self.a = v,
            Coord::Phi => self.phi = v,
            Coord::U => self.u = v,
            Coord::V => self.v = v,
        }
    }
}

/// Natural dispersion parameters of a sampler point.
#[derive(Clone, Copy, Debug)]
struct Dispersion {
    sigma: f64,
    r: f64,
    log_r: f64,
    /// Log Jacobian of `(σ_w, r) → (u, v)`.
    log_jacobian: f64,
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dispersion_from_uv(u: f64, v: f64) -> Dispersion {
    let total = u.exp();
    let log_w = -softplus(-v);
    let log_1mw = -softplus(v);
    let s = total * log_w.exp();
    let q = total * log_1mw.exp();
    let log_expm1_q = q.exp_m1().ln();
    let log_jacobian = -std::f64::consts::LN_2 - 0.5 * s.ln() + q - 2.0 * log_expm1_q
        + 2.0 * u
        + log_w
        + log_1mw;
    Dispersion {
        sigma: s.sqrt(),
        r: 1.0 / q.exp_m1(),
        log_r: -log_expm1_q,
        log_jacobian,
    }
}

fn uv_from_dispersion(sigma: f64, r: f64) -> (f64, f64) {
    let s = sigma * sigma;
    let q = (1.0 / r).ln_1p();
    let total = s + q;
    (total.ln(), (s / q).ln())
}

impl Model<'_> {
    fn new<'a>(data: &'a Data, config: &BssmConfig) -> Model<'a> {
        let mut free = vec![Coord::A];
        if config.fixed_phi.is_none() {
            free.push(Coord::Phi);
        }
        if config.fixed_sigma_w.is_none() {
            free.push(Coord::U);
        }
        free.push(Coord::V);
        Model {
            data,
            priors: config.priors,
            fixed_phi: config.fixed_phi,
            fixed_sigma: config.fixed_sigma_w,
            free,
        }
    }

    fn coord_name(&self, c: Coord) -> &'static str {
        match (c, self.fixed_sigma.is_some()) {
            (Coord::A, _) => "alpha",
            (Coord::Phi, _) => "phi",
            (Coord::U, _) => "overdispersion total",
            (Coord::V, false) => "overdispersion share",
            (Coord::V, true) => "shape_r",
        }
    }

    fn dispersion(&self, th: &Theta) -> Dispersion {
        match self.fixed_sigma {
            Some(sigma) => Dispersion {
                sigma,
                r: th.v.exp(),
                log_r: th.v,
                // Gamma prior density is written on the ln r scale below
                log_jacobian: th.v,
            },
            None => dispersion_from_uv(th.u, th.v),
        }
    }

    fn theta_from_natural(&self, a: f64, phi: f64, sigma: f64, r: f64) -> Theta {
        match self.fixed_sigma {
            Some(_) => Theta {
                a,
                phi,
                u: 0.0,
                v: r.ln(),
            },
            None => {
                let (u, v) = uv_from_dispersion(sigma, r);
                Theta { a, phi, u, v }
            }
        }
    }

    /// Prior log density in sampler coordinates, Jacobian included.
    fn log_prior(&self, th: &Theta, disp: &Dispersion) -> f64 {
        let p = &self.priors;
        let alpha = th.a - th.phi * self.data.g_mean;
        let mut lp = -0.5 * ((alpha - p.alpha_mean) / p.alpha_sd).powi(2);
        if self.fixed_phi.is_none() {
            lp -= 0.5 * ((th.phi - p.phi_mean) / p.phi_sd).powi(2);
        }
        if self.fixed_sigma.is_none() {
            lp -= 0.5 * (disp.sigma / p.sigma_w_scale).powi(2);
        }
        lp + (p.shape_shape - 1.0) * disp.log_r - p.shape_rate * disp.r + disp.log_jacobian
    }

    fn integrand(&self, th: &Theta, t: usize, disp: &Dispersion) -> Integrand {
        Integrand::with_log_r(
            self.data.y[t],
            disp.r,
            disp.log_r,
            th.a + th.phi * self.data.h[t],
            disp.sigma,
            self.data.beta,
        )
    }

    /// Tempered log likelihood with the states integrated out. `modes`
    /// holds Newton starting points and receives the new modes.
    fn log_marginal(&self, th: &Theta, disp: &Dispersion, modes: &mut [f64]) -> f64 {
        let d = self.data;
        let beta = d.beta;
        let (r, sigma) = (disp.r, disp.sigma);
        let m = d.m() as f64;
        if sigma == 0.0 {
            let lik: f64 = (0..d.m())
                .map(|t| {
                    let eta = th.a + th.phi * d.h[t];
                    modes[t] = eta;
                    nb_log_pmf_unchecked(d.y[t], eta, r)
                })
                .sum();
            return beta * lik;
        }
        let r_part = d.y.iter().map(|&y| ln_gamma(y + r)).sum::<f64>() - m * ln_gamma(r)
            + m * r * disp.log_r
            - d.sum_log_fact;
        let mut total = beta * r_part - m * (sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
        for (t, mode) in modes.iter_mut().enumerate() {
            let (li, new_mode) = self.integrand(th, t, disp).log_integral(*mode);
            *mode = new_mode;
            total += li;
        }
        total
    }

    fn log_target(&self, th: &Theta, modes: &mut [f64]) -> f64 {
        let disp = self.dispersion(th);
        if !(disp.r.is_finite() && disp.r > 0.0 && disp.sigma.is_finite() && disp.log_jacobian.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let lp = self.log_prior(th, &disp);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp + self.log_marginal(th, &disp, modes)
    }

    /// Exact draw of `η_t = α + x_t` for every week.
    fn draw_states(&self, th: &Theta, modes: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let disp = self.dispersion(th);
        (0..self.data.m())
            .map(|t| {
                if disp.sigma == 0.0 {
                    th.a + th.phi * self.data.h[t]
                } else {
                    let f = self.integrand(th, t, &disp);
                    let mode = f.mode(modes[t]);
                    f.sample(rng, mode)
                }
            })
            .collect()
    }
}

/// Random-walk proposal scale with warmup adaptation.
struct Scale {
    log_s: f64,
    target: f64,
    batch_tries: u32,
    batch_accepts: u32,
    tries: u64,
    accepts: u64,
}

impl Scale {
    fn new(s: f64, target: f64) -> Self {
        Self {
            log_s: s.ln(),
            target,
            batch_tries: 0,
            batch_accepts: 0,
            tries: 0,
            accepts: 0,
        }
    }

    fn step(&self) -> f64 {
        self.log_s.exp()
    }

    fn record(&mut self, accepted: bool, warm: bool) {
        if warm {
            self.batch_tries += 1;
            self.batch_accepts += accepted as u32;
        } else {
            self.tries += 1;
            self.accepts += accepted as u64;
        }
    }

    fn adapt(&mut self, batch_index: usize) {
        if self.batch_tries == 0 {
            return;
        }
        let rate = self.batch_accepts as f64 / self.batch_tries as f64;
        let delta = (1.0 / (batch_index as f64).sqrt()).min(0.5);
        self.log_s += if rate > self.target { delta } else { -delta };
        self.batch_tries = 0;
        self.batch_accepts = 0;
    }

    fn rate(&self) -> f64 {
        if self.tries == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.tries as f64
        }
    }
}

/// Running mean and covariance (Welford).
struct Moments {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.n > 2 * self.mean.len() + 2).then(|| &self.m2 / (self.n - 1) as f64)
    }
}

struct ChainRun {
    draws: Vec<(Draw, f64)>,
    acceptance: Vec<(String, f64)>,
}

fn accept(rng: &mut ChaCha8Rng, log_ratio: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn initial_theta(model: &Model, rng: &mut ChaCha8Rng) -> Theta {
    let data = model.data;
    let m = data.m() as f64;
    let eta: Vec<f64> = data.y.iter().map(|&y| (y + 0.5).ln()).collect();
    let mean_eta = eta.iter().sum::<f64>() / m;
    let shh: f64 = data.h.iter().map(|h| h * h).sum();
    let phi = model.fixed_phi.unwrap_or_else(|| {
        let slope = if shh > 0.0 {
            eta.iter().zip(&data.h).map(|(e, h)| (e - mean_eta) * h).sum::<f64>() / shh
        } else {
            0.0
        };
        slope.clamp(-1.0, 1.5) + 0.1 * normal(rng)
    });
    let a = mean_eta + 0.1 * normal(rng);
    let resid_sd = (eta
        .iter()
        .zip(&data.h)
        .map(|(e, h)| (e - a - phi * h).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    let sigma = model
        .fixed_sigma
        .unwrap_or_else(|| (0.5 * resid_sd).clamp(0.05, 1.0) * (0.2 * normal(rng)).exp());
    let r = 5.0 * (0.3 * normal(rng)).exp();
    model.theta_from_natural(a, phi, sigma, r)
}

fn run_chain(data: &Data, config: &BssmConfig, mut rng: ChaCha8Rng) -> Result<ChainRun, BssmError> {
    let model = Model::new(data, config);
    let free = model.free.clone();
    let d = free.len();
    let m = data.m();

    let mut th = initial_theta(&model, &mut rng);
    let mut modes: Vec<f64> = (0..m).map(|t| th.a + th.phi * data.h[t]).collect();
    let mut cur = model.log_target(&th, &mut modes);
    if !cur.is_finite() {
        return Err(BssmError::Numerical("log posterior is not finite at the starting point".into()));
    }
    let mut prop_modes = modes.clone();

    let mut singles: Vec<Scale> = free
        .iter()
        .map(|c| {
            let s = match c {
                Coord::A | Coord::Phi => 0.05,
                Coord::U | Coord::V => 0.2,
            };
            Scale::new(s, TARGET_SINGLE)
        })
        .collect();
    let mut joint = Scale::new(2.38 / (d as f64).sqrt(), TARGET_JOINT);
    let mut moments = Moments::new(d);
    let mut chol: Option<DMatrix<f64>> = None;
    let joint_from = config.warmup / 2;

    let mut draws = Vec::with_capacity(config.iterations - config.warmup);
    let mut batch_index = 0;

    for iter in 0..config.iterations {
        let warm = iter < config.warmup;

        // coordinate moves carry warmup until the joint covariance exists
        let coordinate_moves = warm || chol.is_none();
        for (k, &c) in free.iter().enumerate().filter(|_| coordinate_moves) {
            let mut prop = th;
            prop.set(c, th.get(c) + singles[k].step() * normal(&mut rng));
            prop_modes.copy_from_slice(&modes);
            let val = model.log_target(&prop, &mut prop_modes);
            let ok = accept(&mut rng, val - cur);
            singles[k].record(ok, warm);
            if ok {
                th = prop;
                cur = val;
                std::mem::swap(&mut modes, &mut prop_modes);
            }
        }

        if let Some(l) = &chol {
            let repeats = if warm { 1 } else { JOINT_MOVES };
            for _ in 0..repeats {
                let z = DVector::from_fn(d, |_, _| normal(&mut rng));
                let step = l * z * joint.step();
                let mut prop = th;
                for (k, &c) in free.iter().enumerate() {
                    prop.set(c, th.get(c) + step[k]);
                }
                prop_modes.copy_from_slice(&modes);
                let val = model.log_target(&prop, &mut prop_modes);
                let ok = accept(&mut rng, val - cur);
                joint.record(ok, warm);
                if ok {
                    th = prop;
                    cur = val;
                    std::mem::swap(&mut modes, &mut prop_modes);
                }
            }
        }

        if warm {
            if iter >= joint_from {
                moments.push(&DVector::from_iterator(d, free.iter().map(|&c| th.get(c))));
            }
            if (iter + 1) % ADAPT_BATCH == 0 {
                batch_index += 1;
                for s in &mut singles {
                    s.adapt(batch_index);
                }
                if chol.is_some() {
                    joint.adapt(batch_index);
                }
                if let Some(cov) = moments.covariance() {
                    let jitter = DMatrix::from_diagonal_element(d, d, 1e-8);
                    chol = (cov + jitter).cholesky().map(|c| c.l()).or(chol);
                }
            }
            continue;
        }

        let eta = model.draw_states(&th, &modes, &mut rng);
        let alpha = th.a - th.phi * data.g_mean;
        let Dispersion { sigma, r, .. } = model.dispersion(&th);
        let ll: f64 = data
            .y
            .iter()
            .zip(&eta)
            .map(|(&y, &e)| nb_log_pmf_unchecked(y, e, r))
            .sum();
        if !ll.is_finite() || !alpha.is_finite() {
            return Err(BssmError::Numerical(format!(
                "non-finite state at iteration {iter} (alpha {alpha}, log-likelihood {ll})"
            )));
        }
        draws.push((
            Draw {
                alpha,
                phi: th.phi,
                sigma_w: sigma,
                shape_r: r,
                latent_x: eta.iter().map(|e| e - alpha).collect(),
            },
            ll,
        ));
    }

    let mut acceptance: Vec<(String, f64)> = free
        .iter()
        .zip(&singles)
        .map(|(&c, s)| (model.coord_name(c).to_string(), s.rate()))
        .collect();
    acceptance.push(("joint".to_string(), joint.rate()));
    acceptance.retain(|(_, r)| r.is_finite());
    Ok(ChainRun { draws, acceptance })
}
