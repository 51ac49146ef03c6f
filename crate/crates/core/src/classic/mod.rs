//! Classical baselines: trend and structural-break regression, AR and ARMA
//! models fitted to the detrended series, and simple smoothers.

mod ar;
mod arma;
mod forecast;
pub mod ols;
mod smoother;
mod trend;

use thiserror::Error;

pub use ar::{fit_ar, ARModel};
pub use arma::{fit_arma, fit_arma_with, select_arma, ARMAModel, ArmaGridCell, ArmaSelection};
pub use forecast::{classical_forecast, ClassicalModel};
pub use smoother::{fit_es_alpha, fit_smoother, SmootherFit, SmootherModel};
pub use trend::{detect_break, fit_trend_break, fit_trend_break_values, BreakSearch, TrendFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("singular design: {0}")]
    Singular(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid ARMA order ({p}, {q})")]
    InvalidOrder { p: usize, q: usize },
    #[error("series too short: need more than {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(
        "simplex search did not converge after {iterations} iterations \
         (final step {final_step:e}, best parameters {best:?})"
    )]
    NonConvergence {
        best: Vec<f64>,
        final_step: f64,
        iterations: usize,
    },
    #[error("no ARMA order in the grid could be fitted")]
    NoConvergedOrder,
}

impl ModelError {
    /// Numerical failures, as opposed to caller mistakes.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ModelError::Singular(_) | ModelError::NonConvergence { .. } | ModelError::NoConvergedOrder
        )
    }
}
