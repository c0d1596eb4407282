//! Per-day realized measures.
//!
//! Every estimator here is a pure function of one day's intraday log
//! returns. [`compute_components`] assembles them into a
//! [`DailyComponents`] row; [`compute_panel`] maps that over a whole
//! [`Panel`](crate::ingest::Panel) in parallel with order-preserving output.
//!
//! Conventions:
//! - Variance quantities are in daily variance units (sum of squared log
//!   returns), never annualized.
//! - The jump/continuous split truncates at zero: `cj = 1{z > φ₁₋α}·max(rv − rbv, 0)`,
//!   so `cj + cv = rv` always holds.
//! - Extreme tails are closed (`≤`, `≥`) and the moderate band is open.

mod decompose;
mod stats;

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::LazyLock;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::ingest::{Panel, TradingDay};

pub use decompose::{
    empirical_quantile, extreme_split, req_decompose, rex_decompose, ExtremeSplit, QuantileRule,
    ThresholdKind, ThresholdPolicy,
};
pub use stats::{autocorrelations, describe, ljung_box, Description, LjungBox};

/// E|Z| for a standard normal Z, i.e. √(2/π).
pub const MU1: f64 = 0.797_884_560_802_865_4;

static MU_43: LazyLock<f64> = LazyLock::new(|| {
    2f64.powf(2.0 / 3.0) * statrs::function::gamma::gamma(1.0 / 6.0) / (6.0 * PI.sqrt())
});

/// E|Z|^{4/3} = 2^{2/3} Γ(1/6) / (6√π).
pub fn mu_43() -> f64 {
    *MU_43
}

/// Asymptotic variance constant of the relative jump statistic,
/// μ₁⁻⁴ + 2μ₁⁻² − 5 = π²/4 + π − 5.
pub fn jump_variance_constant() -> f64 {
    MU1.powi(-4) + 2.0 * MU1.powi(-2) - 5.0
}

/// Upper standard-normal quantile φ₁₋α.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Sum of squared intraday returns.
pub fn realized_variance(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptyInput(
            "realized variance of an empty day".into(),
        ));
    }
    Ok(returns.iter().map(|r| r * r).sum())
}

/// Realized bipower variation, scaled by n/(n−1) and μ₁⁻².
pub fn bipower_variation(returns: &[f64]) -> Result<f64> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "bipower variation".into(),
            required: 2,
            available: n,
        });
    }
    let sum: f64 = returns.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    let n = n as f64;
    Ok(n / (MU1 * MU1 * (n - 1.0)) * sum)
}

/// Realized tripower quarticity with lags 0, 2, 4.
pub fn tripower_quarticity(returns: &[f64]) -> Result<f64> {
    let n = returns.len();
    if n < 5 {
        return Err(Error::InsufficientData {
            what: "tripower quarticity".into(),
            required: 5,
            available: n,
        });
    }
    let p = 4.0 / 3.0;
    let sum: f64 = (4..n)
        .map(|k| (returns[k - 4].abs() * returns[k - 2].abs() * returns[k].abs()).powf(p))
        .sum();
    let nf = n as f64;
    Ok(nf * nf / (mu_43().powi(3) * (nf - 4.0)) * sum)
}

/// Relative-jump Z statistic. Fails on a day with zero RV or RBV.
pub fn jump_z(rv: f64, rbv: f64, rtq: f64, n: usize) -> Result<f64> {
    if !(rv > 0.0 && rbv > 0.0) {
        return Err(Error::Degenerate(format!(
            "jump statistic needs rv > 0 and rbv > 0 (rv = {rv}, rbv = {rbv})"
        )));
    }
    let denom = (jump_variance_constant() * (rtq / (rbv * rbv)).max(1.0)).sqrt();
    Ok((n as f64).sqrt() * (rv - rbv) / rv / denom)
}

/// Splits RV into a significant-jump part and a continuous part.
///
/// A NaN `z` (undefined statistic) never flags a jump.
pub fn split_cj_cv(rv: f64, rbv: f64, z: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let cj = if z > normal_quantile(1.0 - alpha) {
        (rv - rbv).max(0.0)
    } else {
        0.0
    };
    Ok((cj, rv - cj))
}

/// Positive and negative realized semivariances `(rs_pos, rs_neg)`.
pub fn semivariance(returns: &[f64]) -> (f64, f64) {
    returns.iter().fold((0.0, 0.0), |(pos, neg), &r| {
        if r > 0.0 {
            (pos + r * r, neg)
        } else if r < 0.0 {
            (pos, neg + r * r)
        } else {
            (pos, neg)
        }
    })
}

/// Knobs for [`compute_components`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentConfig {
    /// Tail probability of the jump test.
    pub jump_alpha: f64,
    /// Tail probability for the normal-threshold extreme split.
    pub rex_alpha: f64,
    /// Lower and upper quantile levels for the empirical-quantile split.
    pub req_quantiles: (f64, f64),
    pub quantile_rule: QuantileRule,
}

impl Default for ComponentConfig {
    fn default() -> Self {
        Self {
            jump_alpha: 0.05,
            rex_alpha: 0.05,
            req_quantiles: (0.05, 0.95),
            quantile_rule: QuantileRule::Linear,
        }
    }
}

impl ComponentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a < 0.5;
        if !(self.jump_alpha > 0.0 && self.jump_alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "jump alpha {}",
                self.jump_alpha
            )));
        }
        if !ok(self.rex_alpha) {
            return Err(Error::InvalidParameter(format!(
                "rex alpha {} not in (0, 0.5)",
                self.rex_alpha
            )));
        }
        let (lo, hi) = self.req_quantiles;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "req quantiles ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Days on which some estimator fell back to a degenerate convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    /// Z undefined (rv or rbv zero, or fewer than five returns); cj set to 0.
    pub z_undefined: bool,
    /// Intraday standard deviation was zero, so both REX thresholds are 0.
    pub rex: bool,
    /// Lower and upper empirical quantiles coincide.
    pub req: bool,
}

/// One row of the estimator panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyComponents {
    pub date: NaiveDate,
    pub rv: f64,
    pub rbv: f64,
    pub rtq: f64,
    pub z: f64,
    pub cj: f64,
    pub cv: f64,
    pub rs_pos: f64,
    pub rs_neg: f64,
    pub rex_neg: f64,
    pub rex_pos: f64,
    pub rex_mod: f64,
    pub req_neg: f64,
    pub req_pos: f64,
    pub req_mod: f64,
    #[serde(default)]
    pub flags: DegenerateFlags,
}

/// Computes every realized measure for one day.
pub fn compute_components(day: &TradingDay, config: &ComponentConfig) -> Result<DailyComponents> {
    let r = day.returns();
    let rv = realized_variance(r)?;
    let rbv = bipower_variation(r)?;
    let mut flags = DegenerateFlags::default();

    let rtq = tripower_quarticity(r).unwrap_or(f64::NAN);
    let z = if rtq.is_nan() {
        flags.z_undefined = true;
        f64::NAN
    } else {
        match jump_z(rv, rbv, rtq, r.len()) {
            Ok(z) => z,
            Err(_) => {
                flags.z_undefined = true;
                f64::NAN
            }
        }
    };
    let (cj, cv) = split_cj_cv(rv, rbv, z, config.jump_alpha)?;
    let (rs_pos, rs_neg) = semivariance(r);

    let sigma = stats::sample_std(r);
    let rex = rex_decompose(r, sigma, config.rex_alpha)?;
    flags.rex = rex.degenerate;
    let (q_low, q_high) = config.req_quantiles;
    let req = req_decompose(r, q_low, q_high, config.quantile_rule)?;
    flags.req = req.degenerate;

    Ok(DailyComponents {
        date: day.date(),
        rv,
        rbv,
        rtq,
        z,
        cj,
        cv,
        rs_pos,
        rs_neg,
        rex_neg: rex.neg,
        rex_pos: rex.pos,
        rex_mod: rex.moderate,
        req_neg: req.neg,
        req_pos: req.pos,
        req_mod: req.moderate,
        flags,
    })
}

/// Computes [`DailyComponents`] for every day of a panel, in date order.
pub fn compute_panel(panel: &Panel, config: &ComponentConfig) -> Result<Vec<DailyComponents>> {
    config.validate()?;
    panel
        .days()
        .par_iter()
        .map(|d| compute_components(d, config))
        .collect()
}

pub const COMPONENT_COLUMNS: [&str; 15] = [
    "date", "rv", "rbv", "rtq", "z", "cj", "cv", "rs_pos", "rs_neg", "rex_neg", "rex_pos",
    "rex_mod", "req_neg", "req_pos", "req_mod",
];

/// Writes the components panel as CSV with full double precision.
pub fn write_components_csv<W: Write>(w: W, rows: &[DailyComponents]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(COMPONENT_COLUMNS)?;
    for c in rows {
        let mut rec = vec![c.date.to_string()];
        rec.extend(
            [
                c.rv, c.rbv, c.rtq, c.z, c.cj, c.cv, c.rs_pos, c.rs_neg, c.rex_neg, c.rex_pos,
                c.rex_mod, c.req_neg, c.req_pos, c.req_mod,
            ]
            .map(fmt_f64),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a components CSV written by [`write_components_csv`].
///
/// Only the `z_undefined` flag can be recovered (from a NaN `z`).
pub fn read_components_csv<R: Read>(r: R) -> Result<Vec<DailyComponents>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != COMPONENT_COLUMNS {
        return Err(Error::Format(format!(
            "components header must be `{}`",
            COMPONENT_COLUMNS.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("line {line}: bad date {:?}: {e}", &rec[0])))?;
        let mut v = [0.0; 14];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = rec[j + 1]
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: bad number {:?}", &rec[j + 1])))?;
        }
        out.push(DailyComponents {
            date,
            rv: v[0],
            rbv: v[1],
            rtq: v[2],
            z: v[3],
            cj: v[4],
            cv: v[5],
            rs_pos: v[6],
            rs_neg: v[7],
            rex_neg: v[8],
            rex_pos: v[9],
            rex_mod: v[10],
            req_neg: v[11],
            req_pos: v[12],
            req_mod: v[13],
            flags: DegenerateFlags {
                z_undefined: v[3].is_nan(),
                ..Default::default()
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn realized_variance_cases() {
        assert!(close(
            realized_variance(&[0.01, -0.02]).unwrap(),
            5.0e-4,
            1e-14
        ));
        assert_eq!(realized_variance(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(realized_variance(&[0.3]).unwrap(), 0.3 * 0.3);
        assert!(realized_variance(&[]).is_err());
    }

    #[test]
    fn bipower_hand_value() {
        // (3/2)(π/2)(2·1e-4)
        let expected = 1.5 * (PI / 2.0) * 2e-4;
        assert!(close(
            bipower_variation(&[0.01; 3]).unwrap(),
            expected,
            1e-13
        ));
        assert!((expected - 4.712389e-4).abs() < 1e-10);
        assert_eq!(bipower_variation(&[0.0; 5]).unwrap(), 0.0);
        assert!(bipower_variation(&[0.1]).is_err());
    }

    #[test]
    fn tripower_constant_returns() {
        let c: f64 = 0.003;
        for n in [5usize, 10, 78] {
            let expected = (n * n) as f64 * c.powi(4) / mu_43().powi(3);
            assert!(close(
                tripower_quarticity(&vec![c; n]).unwrap(),
                expected,
                1e-12
            ));
        }
        assert_eq!(tripower_quarticity(&[0.0; 10]).unwrap(), 0.0);
        assert!(tripower_quarticity(&[0.1; 4]).is_err());
    }

    #[test]
    fn mu1_matches_definition() {
        assert!((MU1 - (2.0 / PI).sqrt()).abs() < 1e-16);
        assert!((jump_variance_constant() - (PI * PI / 4.0 + PI - 5.0)).abs() < 1e-14);
    }

    #[test]
    fn jump_z_cases() {
        assert_eq!(jump_z(1e-4, 1e-4, 1e-8, 78).unwrap(), 0.0);
        let z = jump_z(2.0, 1.0, 0.5, 100).unwrap();
        let expected = 10.0 * 0.5 / (1.0 / (4.0 / (PI * PI)) + 2.0 / (2.0 / PI) - 5.0).sqrt();
        assert!(close(z, expected, 1e-13));
        assert!(jump_z(0.0, 1.0, 1.0, 10).is_err());
        assert!(jump_z(1.0, 0.0, 1.0, 10).is_err());
    }

    #[test]
    fn split_cases() {
        let (cj, cv) = split_cj_cv(3.0, 2.0, 0.5, 0.05).unwrap();
        assert_eq!((cj, cv), (0.0, 3.0));
        let (cj, cv) = split_cj_cv(3.0, 2.0, 5.0, 0.05).unwrap();
        assert_eq!((cj, cv), (1.0, 2.0));
        let (cj, cv) = split_cj_cv(2.0, 3.0, 5.0, 0.05).unwrap();
        assert_eq!((cj, cv), (0.0, 2.0));
        let (cj, _) = split_cj_cv(3.0, 2.0, f64::NAN, 0.05).unwrap();
        assert_eq!(cj, 0.0);
        assert!(split_cj_cv(1.0, 1.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn semivariance_cases() {
        let (p, n) = semivariance(&[0.01, -0.02]);
        assert!(close(p, 1e-4, 1e-14) && close(n, 4e-4, 1e-14));
        let (p, n) = semivariance(&[0.2, -0.2]);
        assert_eq!(p, n);
        assert_eq!(semivariance(&[0.0; 3]), (0.0, 0.0));
    }

    #[test]
    fn components_round_trip_csv() {
        use chrono::NaiveTime;
        let date = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let prices: Vec<f64> = (0..30)
            .map(|i| 100.0 * (1.0 + 0.001 * ((i * 7 % 11) as f64 - 5.0)))
            .collect();
        let times = (0..30)
            .map(|i| NaiveTime::from_num_seconds_from_midnight_opt(34200 + 300 * i, 0).unwrap())
            .collect();
        let day = TradingDay::from_prices(date, times, prices).unwrap();
        let row = compute_components(&day, &ComponentConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_components_csv(&mut buf, &[row]).unwrap();
        let back = read_components_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].rv.to_bits(), row.rv.to_bits());
        assert_eq!(back[0].req_mod.to_bits(), row.req_mod.to_bits());
        assert_eq!(back[0].z.to_bits(), row.z.to_bits());
    }

    #[test]
    fn constant_day_is_flagged_not_fatal() {
        use chrono::NaiveTime;
        let date = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let times = (0..12)
            .map(|i| NaiveTime::from_num_seconds_from_midnight_opt(34200 + 300 * i, 0).unwrap())
            .collect();
        let day = TradingDay::from_prices(date, times, vec![10.0; 12]).unwrap();
        let row = compute_components(&day, &ComponentConfig::default()).unwrap();
        assert!(row.flags.z_undefined && row.flags.rex && row.flags.req);
        assert_eq!(row.cj, 0.0);
        assert_eq!(row.rv, 0.0);
    }
}
