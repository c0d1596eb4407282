//! Realized-volatility forecasting with path-dependent features.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`]: intraday bars to per-day log returns.
//! - [`estimators`]: RV, bipower variation, jump test, semivariances and
//!   extreme/moderate splits.
//! - [`features`]: exponential-kernel trend/volatility features and the
//!   path-dependent transform of any daily series.
//! - [`models`]: HAR and HAR-PD design matrices, OLS, profiled estimation of
//!   kernel decays, and LASSO with cross-validation.
//! - [`forecast`]: rolling fixed-window direct multi-step forecasting.
//! - [`evaluate`]: loss functions, the model confidence set and
//!   out-of-sample R².
//! - [`synth`]: jump-diffusion and path-dependent simulators used as
//!   ground truth in tests.

pub mod error;
pub mod estimators;
pub mod evaluate;
pub mod features;
pub mod forecast;
pub mod ingest;
pub mod models;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
