use serde::{Deserialize, Serialize};

use super::normal_quantile;
use crate::error::{Error, Result};

/// Result of splitting a day's squared returns into two tails and a
/// moderate band. `neg + pos + moderate` equals the day's RV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSplit {
    pub neg: f64,
    pub pos: f64,
    pub moderate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Thresholds collapsed (zero σ or coinciding quantiles).
    pub degenerate: bool,
}

/// Empirical quantile convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileRule {
    /// Linear interpolation between order statistics (Hyndman–Fan type 7).
    #[default]
    Linear,
    /// Inverse of the empirical CDF (type 1).
    InverseCdf,
}

/// Empirical `p`-quantile of `sorted` (ascending, nonempty).
pub fn empirical_quantile(sorted: &[f64], p: f64, rule: QuantileRule) -> f64 {
    let n = sorted.len();
    match rule {
        QuantileRule::Linear => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
        QuantileRule::InverseCdf => {
            let k = (n as f64 * p).ceil() as usize;
            sorted[k.clamp(1, n) - 1]
        }
    }
}

/// Splits squared returns by `r ≤ lower` (negative tail), `r ≥ upper`
/// (positive tail) and the open band in between. Tests are applied in that
/// order, so a return can only land in one bucket.
pub fn extreme_split(returns: &[f64], lower: f64, upper: f64) -> ExtremeSplit {
    let (mut neg, mut pos, mut moderate) = (0.0, 0.0, 0.0);
    for &r in returns {
        let sq = r * r;
        if r <= lower {
            neg += sq;
        } else if r >= upper {
            pos += sq;
        } else {
            moderate += sq;
        }
    }
    ExtremeSplit {
        neg,
        pos,
        moderate,
        lower,
        upper,
        degenerate: lower >= upper,
    }
}

/// Extreme/moderate split with thresholds Φ⁻¹(α)·σ and Φ⁻¹(1−α)·σ.
pub fn rex_decompose(returns: &[f64], sigma: f64, alpha: f64) -> Result<ExtremeSplit> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 0.5), got {alpha}"
        )));
    }
    let lower = normal_quantile(alpha) * sigma;
    let upper = normal_quantile(1.0 - alpha) * sigma;
    Ok(extreme_split(returns, lower, upper))
}

/// Extreme/moderate split with the day's own empirical quantiles as
/// thresholds.
pub fn req_decompose(
    returns: &[f64],
    q_low: f64,
    q_high: f64,
    rule: QuantileRule,
) -> Result<ExtremeSplit> {
    if !(q_low > 0.0 && q_low < q_high && q_high < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile levels must satisfy 0 < q_low < q_high < 1, got ({q_low}, {q_high})"
        )));
    }
    if returns.len() < 2 {
        return Err(Error::InsufficientData {
            what: "empirical quantile split".into(),
            required: 2,
            available: returns.len(),
        });
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lower = empirical_quantile(&sorted, q_low, rule);
    let upper = empirical_quantile(&sorted, q_high, rule);
    Ok(extreme_split(returns, lower, upper))
}

/// Threshold construction for the extreme/moderate split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    NormalCdf,
    EmpiricalQuantile,
}

/// Threshold kind plus tail probability α ∈ (0, 0.5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    kind: ThresholdKind,
    alpha: f64,
}

impl ThresholdPolicy {
    pub fn new(kind: ThresholdKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 0.5), got {alpha}"
            )));
        }
        Ok(Self { kind, alpha })
    }

    pub fn kind(&self) -> ThresholdKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Applies the policy to one day. The normal kind scales by the sample
    /// standard deviation of the day's returns; the quantile kind uses
    /// levels (α, 1 − α) with linear interpolation.
    pub fn decompose(&self, returns: &[f64]) -> Result<ExtremeSplit> {
        match self.kind {
            ThresholdKind::NormalCdf => {
                rex_decompose(returns, super::stats::sample_std(returns), self.alpha)
            }
            ThresholdKind::EmpiricalQuantile => {
                req_decompose(returns, self.alpha, 1.0 - self.alpha, QuantileRule::Linear)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::realized_variance;

    #[test]
    fn all_moderate() {
        let r = [0.001, -0.002, 0.0015];
        let s = rex_decompose(&r, 1.0, 0.05).unwrap();
        assert_eq!((s.neg, s.pos), (0.0, 0.0));
        assert_eq!(s.moderate, realized_variance(&r).unwrap());
    }

    #[test]
    fn upper_boundary_is_closed() {
        let sigma = 0.01;
        let upper = normal_quantile(0.95) * sigma;
        let r = [upper, 0.0, -0.001];
        let s = rex_decompose(&r, sigma, 0.05).unwrap();
        assert_eq!(s.pos, upper * upper);
        let lower = normal_quantile(0.05) * sigma;
        let s = rex_decompose(&[lower, 0.0], sigma, 0.05).unwrap();
        assert_eq!(s.neg, lower * lower);
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        let s = rex_decompose(&[0.01, -0.01, 0.0], 0.0, 0.05).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.moderate, 0.0);
        assert_eq!(s.neg + s.pos, 2e-4);
    }

    #[test]
    fn quantile_rules() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&x, 0.5, QuantileRule::Linear), 3.0);
        assert_eq!(empirical_quantile(&x, 0.1, QuantileRule::Linear), 1.4);
        assert_eq!(empirical_quantile(&x, 0.1, QuantileRule::InverseCdf), 1.0);
        assert_eq!(empirical_quantile(&x, 0.95, QuantileRule::InverseCdf), 5.0);
        assert_eq!(empirical_quantile(&x, 0.4, QuantileRule::InverseCdf), 2.0);
    }

    #[test]
    fn req_zero_day() {
        let s = req_decompose(&[0.0; 10], 0.05, 0.95, QuantileRule::Linear).unwrap();
        assert_eq!((s.neg, s.pos, s.moderate), (0.0, 0.0, 0.0));
        assert!(s.degenerate);
    }

    #[test]
    fn req_rejects_bad_levels() {
        assert!(req_decompose(&[0.1, 0.2], 0.9, 0.1, QuantileRule::Linear).is_err());
        assert!(req_decompose(&[0.1], 0.05, 0.95, QuantileRule::Linear).is_err());
    }

    #[test]
    fn threshold_policy_validation() {
        assert!(ThresholdPolicy::new(ThresholdKind::NormalCdf, 0.5).is_err());
        let p = ThresholdPolicy::new(ThresholdKind::EmpiricalQuantile, 0.05).unwrap();
        let r: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) * 1e-3).collect();
        let s = p.decompose(&r).unwrap();
        let q = req_decompose(&r, 0.05, 0.95, QuantileRule::Linear).unwrap();
        assert_eq!(s, q);
    }
}
