//! Burst detection, dispersion diagnostics, classical baselines, and a Bayesian
//! negative-binomial local-level forecaster for weekly event-count series.

pub mod bssm;
pub mod burst;
pub mod classic;
pub mod cli;
pub mod eval;
pub mod forecast;
pub mod optimize;
pub mod rng;
pub mod series;
pub mod special;
