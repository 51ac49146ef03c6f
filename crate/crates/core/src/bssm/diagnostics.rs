use serde::{Deserialize, Serialize};

use super::{BssmError, PosteriorSamples};

pub const RHAT_MAX: f64 = 1.05;
pub const ESS_MIN: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostic {
    pub name: String,
    /// `None` when the chains have zero variance.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub parameters: Vec<ParameterDiagnostic>,
    pub divergence_flags: Vec<String>,
    pub pass: bool,
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(&c[..half]);
        // the middle draw of an odd-length chain is dropped
        out.push(&c[c.len() - half..]);
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

struct Pooled {
    /// Mean within-chain variance.
    w: f64,
    var_plus: f64,
    n: usize,
}

fn pooled(parts: &[&[f64]]) -> Option<Pooled> {
    let n = parts.iter().map(|p| p.len()).min()?;
    if n < 2 || parts.len() < 2 {
        return None;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, m)| p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / parts.len() as f64;
    let grand = mean(&means);
    let b_over_n = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    let var_plus = w * (n - 1) as f64 / n as f64 + b_over_n;
    if !(w > 0.0) || !var_plus.is_finite() {
        return None;
    }
    Some(Pooled { w, var_plus, n })
}

/// Split-R̂ over equal-length chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let parts = split(chains);
    let p = pooled(&parts)?;
    Some((p.var_plus / p.w).sqrt())
}

/// Effective sample size from split chains, using the combined
/// autocorrelation truncated at the first negative pair sum with the
/// monotone sequence correction.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let parts = split(chains);
    let p = pooled(&parts)?;
    let n = p.n;
    let centered: Vec<Vec<f64>> = parts
        .iter()
        .map(|c| {
            let m = mean(&c[..n]);
            c[..n].iter().map(|x| x - m).collect()
        })
        .collect();
    let rho = |t: usize| {
        let acov = centered
            .iter()
            .map(|c| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / centered.len() as f64;
        1.0 - (p.w - acov) / p.var_plus
    };
    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau_sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * tau_sum).max(1.0 / ((n * parts.len()) as f64).log10().max(1.0));
    Some((n * parts.len()) as f64 / tau)
}

pub fn diagnostics(samples: &PosteriorSamples) -> Result<DiagnosticsReport, BssmError> {
    if samples.n_chains < 2 {
        return Err(BssmError::SingleChain(samples.n_chains));
    }
    let mut params: Vec<(&str, &[f64])> = vec![("alpha", &samples.alpha)];
    if !samples.fixed_phi {
        params.push(("phi", &samples.phi));
    }
    if !samples.fixed_sigma_w {
        params.push(("sigma_w", &samples.sigma_w));
    }
    params.push(("shape_r", &samples.shape_r));
    let parameters: Vec<ParameterDiagnostic> = params
        .into_iter()
        .map(|(name, values)| {
            let chains = samples.chains_of(values);
            let rhat = split_rhat(&chains);
            let ess = effective_sample_size(&chains);
            let pass = matches!((rhat, ess), (Some(r), Some(e)) if r < RHAT_MAX && e > ESS_MIN);
            ParameterDiagnostic {
                name: name.to_string(),
                rhat,
                ess,
                pass,
            }
        })
        .collect();
    let pass = parameters.iter().all(|p| p.pass);
    Ok(DiagnosticsReport {
        parameters,
        divergence_flags: samples.warnings.clone(),
        pass,
    })
}
