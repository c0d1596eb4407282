//! Path-dependent regressors built from exponential kernels.
//!
//! With K_λ(τ) = λe^{−λτ} and lags counted in trading days:
//!
//! - trend feature `R1_t = Σ_{i≥1} K_λ(i) r̃_{t,i}`
//! - volatility feature `R2_t = Σ_{i≥1} K_λ(i) r̃²_{t,i}`
//! - path-dependent transform `PDX_t = Σ_{i≥1} K_λ(i) X_{t−i}`
//!
//! Sums run over the history available at `t`, truncated at the kernel's
//! cutoff. Index 0 has no history, so every feature starts at index 1.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;

/// Default relative tail tolerance for kernel truncation.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;
/// Hard cap on the number of lags any kernel may use.
pub const MAX_KERNEL_LAGS: usize = 20_000;

/// Where a kernel sum is truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// Use lags `1..=L`.
    MaxLag(usize),
    /// Smallest `L` with relative tail mass `e^{−λL}` at most this value.
    Tolerance(f64),
}

/// Exponential kernel decay and truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParam {
    lambda: f64,
    cutoff: Cutoff,
}

impl KernelParam {
    /// Kernel with the default tail tolerance.
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_cutoff(lambda, Cutoff::Tolerance(DEFAULT_TAIL_TOLERANCE))
    }

    pub fn with_cutoff(lambda: f64, cutoff: Cutoff) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel decay must be > 0, got {lambda}"
            )));
        }
        match cutoff {
            Cutoff::MaxLag(0) => {
                return Err(Error::InvalidParameter(
                    "kernel cutoff must be at least one lag".into(),
                ))
            }
            Cutoff::Tolerance(t) if !(t > 0.0 && t < 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "tail tolerance must lie in (0, 1), got {t}"
                )))
            }
            _ => {}
        }
        Ok(Self { lambda, cutoff })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    /// Largest lag included in the sums.
    pub fn max_lag(&self) -> usize {
        match self.cutoff {
            Cutoff::MaxLag(l) => l.min(MAX_KERNEL_LAGS),
            Cutoff::Tolerance(tol) => {
                let l = (-tol.ln() / self.lambda).ceil();
                (l as usize).clamp(1, MAX_KERNEL_LAGS)
            }
        }
    }

    /// Weights K_λ(1), …, K_λ(L).
    pub fn weights(&self) -> Vec<f64> {
        (1..=self.max_lag())
            .map(|i| exp_kernel(self.lambda, i as f64))
            .collect()
    }
}

/// λe^{−λτ}.
pub fn exp_kernel(lambda: f64, tau: f64) -> f64 {
    lambda * (-lambda * tau).exp()
}

/// How the return at lag `i` is measured for the trend/volatility features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnConvention {
    /// `(S_t − S_{t−i}) / S_{t−i}`: cumulative return from `t−i` to `t`.
    #[default]
    Cumulative,
    /// `(S_{t−i+1} − S_{t−i}) / S_{t−i}`: the single-day return `i−1` days back.
    Daily,
}

/// What a [`FeatureSeries`] holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Trend,
    Volatility,
    PathDependent(String),
}

impl FeatureKind {
    pub fn name(&self) -> String {
        match self {
            FeatureKind::Trend => "R1".into(),
            FeatureKind::Volatility => "R2".into(),
            FeatureKind::PathDependent(x) => format!("PD{x}"),
        }
    }
}

/// A feature aligned with the panel calendar. Entries before `burn_in` are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub kind: FeatureKind,
    pub kernel: KernelParam,
    pub burn_in: usize,
    pub values: Vec<f64>,
}

fn check_closes(closes: &[f64]) -> Result<()> {
    if closes.len() < 2 {
        return Err(Error::InsufficientData {
            what: "price feature".into(),
            required: 2,
            available: closes.len(),
        });
    }
    if let Some(p) = closes.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "daily close {p} is not positive"
        )));
    }
    Ok(())
}

fn lagged_return(closes: &[f64], t: usize, i: usize, convention: ReturnConvention) -> f64 {
    match convention {
        ReturnConvention::Cumulative => (closes[t] - closes[t - i]) / closes[t - i],
        ReturnConvention::Daily => (closes[t - i + 1] - closes[t - i]) / closes[t - i],
    }
}

/// Kernel sum at date `t ≥ 1` using only `closes[..=t]`.
pub(crate) fn price_feature_at(
    closes: &[f64],
    t: usize,
    w: &[f64],
    convention: ReturnConvention,
    transform: impl Fn(f64) -> f64,
) -> f64 {
    let lags = w.len().min(t);
    (1..=lags)
        .map(|i| w[i - 1] * transform(lagged_return(closes, t, i, convention)))
        .sum()
}

fn price_feature(
    closes: &[f64],
    kernel: KernelParam,
    convention: ReturnConvention,
    kind: FeatureKind,
    transform: impl Fn(f64) -> f64,
) -> Result<FeatureSeries> {
    check_closes(closes)?;
    let w = kernel.weights();
    let mut values = vec![f64::NAN; closes.len()];
    for (t, v) in values.iter_mut().enumerate().skip(1) {
        *v = price_feature_at(closes, t, &w, convention, &transform);
    }
    Ok(FeatureSeries {
        kind,
        kernel,
        burn_in: 1,
        values,
    })
}

/// Trend feature R1 from daily closes.
pub fn trend_feature(
    closes: &[f64],
    kernel: KernelParam,
    convention: ReturnConvention,
) -> Result<FeatureSeries> {
    price_feature(closes, kernel, convention, FeatureKind::Trend, |r| r)
}

/// Volatility feature R2 from daily closes.
pub fn vol_feature(
    closes: &[f64],
    kernel: KernelParam,
    convention: ReturnConvention,
) -> Result<FeatureSeries> {
    price_feature(closes, kernel, convention, FeatureKind::Volatility, |r| {
        r * r
    })
}

/// Kernel-weighted sum of strictly past values of a daily series.
pub fn pd_transform(series: &[f64], kernel: KernelParam, label: &str) -> FeatureSeries {
    let w = kernel.weights();
    let mut values = vec![f64::NAN; series.len()];
    for (t, v) in values.iter_mut().enumerate().skip(1) {
        let lags = w.len().min(t);
        *v = (1..=lags).map(|i| w[i - 1] * series[t - i]).sum();
    }
    FeatureSeries {
        kind: FeatureKind::PathDependent(label.to_string()),
        kernel,
        burn_in: 1,
        values,
    }
}

/// `(1/h) Σ_{j=1..h} x_{t−j}`; NaN for `t < h`.
pub fn lag_mean(series: &[f64], h: usize) -> Vec<f64> {
    assert!(h >= 1, "lag_mean needs h >= 1");
    let mut out = vec![f64::NAN; series.len()];
    for (t, v) in out.iter_mut().enumerate().skip(h) {
        *v = series[t - h..t].iter().sum::<f64>() / h as f64;
    }
    out
}

/// `(1/h) Σ_{j=0..h−1} x_{o−j}`, the value [`lag_mean`] takes one step later.
pub(crate) fn trailing_mean(series: &[f64], h: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; series.len()];
    for (o, v) in out.iter_mut().enumerate().skip(h - 1) {
        *v = series[o + 1 - h..=o].iter().sum::<f64>() / h as f64;
    }
    out
}

/// Writes features as CSV (`date,<name>...`).
pub fn write_features_csv<W: Write>(
    w: W,
    dates: &[NaiveDate],
    features: &[&FeatureSeries],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(features.iter().map(|f| f.kind.name()));
    wtr.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(features.iter().map(|f| fmt_f64(f.values[t])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Kernel metadata for the JSON sidecar of a feature CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub lambda: f64,
    pub cutoff: Cutoff,
    pub max_lag: usize,
    pub burn_in: usize,
}

impl From<&FeatureSeries> for FeatureMeta {
    fn from(f: &FeatureSeries) -> Self {
        Self {
            name: f.kind.name(),
            lambda: f.kernel.lambda(),
            cutoff: f.kernel.cutoff(),
            max_lag: f.kernel.max_lag(),
            burn_in: f.burn_in,
        }
    }
}
