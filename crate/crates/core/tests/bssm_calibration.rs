//! Sampler calibration against known truths and an independent quadrature.

use burstcast::bssm::{
    fit_bssm, predict_one_step, sample_nb, wbic, BssmConfig, ModelParams, PosteriorSamples,
};
use burstcast::series::CountSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, NegativeBinomial};

const TRUTH: ModelParams = ModelParams {
    alpha: 1.0,
    phi: 0.6,
    sigma_w: 0.2,
    shape_r: 5.0,
};

fn light_config(seed: u64) -> BssmConfig {
    BssmConfig {
        chains: 2,
        iterations: 800,
        warmup: 300,
        seed,
        ..BssmConfig::default()
    }
}

#[test]
fn credible_intervals_cover_truth() {
    let reps = 100;
    let mut covered = [0usize; 4];
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let series = CountSeries::new(TRUTH.simulate(&mut rng, 12, 400), "sim");
        let post = fit_bssm(&series, &light_config(rep)).unwrap();
        let checks = [
            (&post.alpha, TRUTH.alpha),
            (&post.phi, TRUTH.phi),
            (&post.sigma_w, TRUTH.sigma_w),
            (&post.shape_r, TRUTH.shape_r),
        ];
        for (k, (draws, truth)) in checks.iter().enumerate() {
            let (lo, hi) = PosteriorSamples::interval_of(draws, 0.95);
            if lo <= *truth && *truth <= hi {
                covered[k] += 1;
            }
        }
    }
    eprintln!("coverage alpha/phi/sigma_w/r: {covered:?} of {reps}");
    assert!(covered[0] >= 90, "alpha: {}/{reps}", covered[0]);
    assert!(covered[1] >= 90, "phi: {}/{reps}", covered[1]);
    // σ_w and r trade off along a ridge whose far end (large r) the
    // Gamma(2, 0.1) prior favors, so at r = 5 their nominal coverage is
    // not reached even with long chains; the sampler itself passes
    // simulation-based calibration. These floors guard against regressions.
    assert!(covered[2] >= 80, "sigma_w: {}/{reps}", covered[2]);
    assert!(covered[3] >= 75, "shape_r: {}/{reps}", covered[3]);
}

/// Tempered expected negative log likelihood of the reduced model
/// (α, r only) by trapezoid quadrature over (α, ln r).
fn quadrature_wbic(ys: &[u64], beta: f64) -> f64 {
    let obs = &ys[1..];
    let log_lik = |alpha: f64, r: f64| -> f64 {
        let mu = alpha.exp();
        let d = NegativeBinomial::new(r, r / (r + mu)).unwrap();
        obs.iter().map(|&y| d.ln_pmf(y)).sum()
    };
    let log_prior = |alpha: f64, log_r: f64| -> f64 {
        let r = log_r.exp();
        // N(0, 5) on α, Gamma(2, rate 0.1) on r, Jacobian r for the ln r axis
        -0.5 * (alpha / 5.0).powi(2) + (2.0 - 1.0) * log_r - 0.1 * r + log_r
    };
    let k = 300;
    let (a_lo, a_hi) = (1.2, 3.4);
    let (lr_lo, lr_hi) = (-1.5, 5.5);
    let (ha, hr) = ((a_hi - a_lo) / k as f64, (lr_hi - lr_lo) / k as f64);
    let mut cells = Vec::with_capacity((k + 1) * (k + 1));
    for i in 0..=k {
        for j in 0..=k {
            let a = a_lo + i as f64 * ha;
            let lr = lr_lo + j as f64 * hr;
            let ll = log_lik(a, lr.exp());
            let w = if i == 0 || i == k { 0.5 } else { 1.0 } * if j == 0 || j == k { 0.5 } else { 1.0 };
            cells.push((w, log_prior(a, lr) + beta * ll, ll));
        }
    }
    let peak = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut e) = (0.0, 0.0);
    for (w, lp, ll) in cells {
        let p = w * (lp - peak).exp();
        z += p;
        e += p * -ll;
    }
    e / z
}

#[test]
fn wbic_matches_quadrature_on_reduced_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let ys: Vec<u64> = (0..100).map(|_| sample_nb(&mut rng, 10.0, 3.0)).collect();
    let series = CountSeries::new(ys.clone(), "iid");
    let cfg = BssmConfig {
        chains: 4,
        iterations: 3000,
        warmup: 1000,
        seed: 7,
        fixed_phi: Some(0.0),
        fixed_sigma_w: Some(0.0),
        ..BssmConfig::default()
    };
    let got = wbic(&series, &cfg).unwrap();
    let beta = 1.0 / (99f64).ln();
    assert!((got.inverse_temperature - beta).abs() < 1e-15);
    let want = quadrature_wbic(&ys, beta);
    let rel = (got.natural - want).abs() / want;
    eprintln!("wbic sampler {} quadrature {want} ({rel:.4})", got.natural);
    assert!(rel < 0.03, "{} vs {want}", got.natural);
    assert_eq!(got.deviance, 2.0 * got.natural);
}

#[test]
fn wider_level_never_narrows_and_bounds_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let series = CountSeries::new(TRUTH.simulate(&mut rng, 12, 150), "sim");
    let post = fit_bssm(&series, &light_config(11)).unwrap();
    let narrow = predict_one_step(&post, &series, 0.80).unwrap();
    let wide = predict_one_step(&post, &series, 0.95).unwrap();
    assert_eq!(narrow.rows.len(), 150);
    assert!(wide.rows[0].point.is_none() && wide.rows[0].lower.is_none());
    for (n, w) in narrow.rows.iter().zip(&wide.rows).skip(1) {
        let (nl, nu) = (n.lower.unwrap(), n.upper.unwrap());
        let (wl, wu) = (w.lower.unwrap(), w.upper.unwrap());
        assert!(wl <= nl && nu <= wu, "week {}: [{nl},{nu}] vs [{wl},{wu}]", n.week);
        assert!(wl >= 0.0 && w.point.unwrap() >= 0.0);
        assert!(wl <= w.median.unwrap() && w.median.unwrap() <= wu);
        assert_eq!(n.point, w.point);
    }
    let again = predict_one_step(&post, &series, 0.95).unwrap();
    assert_eq!(again, wide);
}
