//! Simulators with known ground truth.
//!
//! [`simulate_jump_diffusion`] produces intraday bars from an Euler-discretized
//! log-price with optional regime-switching volatility and compound Poisson
//! jumps. [`simulate_pdv_panel`] produces daily closes and RV following the
//! path-dependent regression with known kernel decays.
//!
//! All volatilities are per trading day; the intraday step is `Δ = 1/n`.

use std::io::Write;

use chrono::{Datelike, Days, NaiveDate, NaiveTime, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{price_feature_at, KernelParam, ReturnConvention};
use crate::fmt_f64;
use crate::ingest::{Panel, TradingDay};
use crate::rng::stream;

/// Seconds in the 09:30–16:00 session.
const SESSION_SECONDS: u64 = 23_400;
/// Stream id reserved for the regime path.
const REGIME_STREAM: u64 = u64::MAX;

/// Spot volatility model (daily units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VolProcess {
    Constant {
        sigma: f64,
    },
    /// Two-state Markov chain switching at `switch_rate` expected changes per
    /// day, checked at every intraday step. Starts in the low state.
    TwoState {
        low: f64,
        high: f64,
        switch_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_days: usize,
    pub n_intraday: usize,
    /// Annualized drift (252 days per year).
    pub mu: f64,
    pub vol: VolProcess,
    /// Expected jumps per day.
    pub jump_intensity: f64,
    pub jump_size_std: f64,
    pub seed: u64,
    pub start_price: f64,
    pub start_date: NaiveDate,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_days: 1000,
            n_intraday: 78,
            mu: 0.0,
            vol: VolProcess::Constant { sigma: 0.01 },
            jump_intensity: 0.0,
            jump_size_std: 0.0,
            seed: 0,
            start_price: 100.0,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if self.n_intraday < 5 {
            return bad(format!(
                "n_intraday must be at least 5, got {}",
                self.n_intraday
            ));
        }
        match self.vol {
            VolProcess::Constant { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                return bad(format!("volatility must be > 0, got {sigma}"))
            }
            VolProcess::TwoState {
                low,
                high,
                switch_rate,
            } if !(low > 0.0 && high > 0.0 && low.is_finite() && high.is_finite())
                || !(switch_rate >= 0.0 && switch_rate.is_finite()) =>
            {
                return bad(format!(
                    "invalid regime levels ({low}, {high}) or rate {switch_rate}"
                ))
            }
            _ => {}
        }
        if !(self.jump_intensity >= 0.0 && self.jump_intensity.is_finite()) {
            return bad(format!(
                "jump intensity must be >= 0, got {}",
                self.jump_intensity
            ));
        }
        if !(self.jump_size_std >= 0.0 && self.jump_size_std.is_finite()) {
            return bad(format!(
                "jump size std must be >= 0, got {}",
                self.jump_size_std
            ));
        }
        if !(self.start_price > 0.0 && self.start_price.is_finite()) || !self.mu.is_finite() {
            return bad("start price must be > 0 and drift finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub day: usize,
    pub step: usize,
    pub size: f64,
}

/// Per-day truth of a jump-diffusion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub dates: Vec<NaiveDate>,
    /// Σ σ²Δ over the day's steps.
    pub iv: Vec<f64>,
    /// Σ κ² over the day's jumps.
    pub jump_var: Vec<f64>,
    pub jumps: Vec<Jump>,
}

/// Log-price increments of one day with their decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DayPath {
    pub increments: Vec<f64>,
    /// Spot volatility in force over each step.
    pub sigma: Vec<f64>,
    /// Jump component of each increment.
    pub jump: Vec<f64>,
    pub iv: f64,
    pub jump_var: f64,
}

/// Business days (Monday to Friday) starting at `start` or the next weekday.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Bar times for `n` returns: `n + 1` stamps evenly spaced over the session.
pub fn session_times(n: usize) -> Vec<NaiveTime> {
    let open = NaiveTime::from_hms_opt(9, 30, 0).expect("valid time");
    (0..=n)
        .map(|k| {
            let nanos = (k as u128 * SESSION_SECONDS as u128 * 1_000_000_000 / n as u128) as u64;
            open + chrono::Duration::nanoseconds(nanos as i64)
        })
        .collect()
}

/// Regime state (true = high) at every step, drawn sequentially from its
/// own stream. Empty for constant volatility.
pub fn regime_path(cfg: &SimConfig) -> Vec<bool> {
    let VolProcess::TwoState { switch_rate, .. } = cfg.vol else {
        return Vec::new();
    };
    let p = 1.0 - (-switch_rate / cfg.n_intraday as f64).exp();
    let mut rng = stream(cfg.seed, REGIME_STREAM);
    let mut state = false;
    (0..cfg.n_days * cfg.n_intraday)
        .map(|_| {
            let s = state;
            if rng.random::<f64>() < p {
                state = !state;
            }
            s
        })
        .collect()
}

/// Simulates day `day` given the regime states of its steps.
pub fn simulate_day(cfg: &SimConfig, day: usize, regimes: &[bool]) -> Result<DayPath> {
    let n = cfg.n_intraday;
    let dt = 1.0 / n as f64;
    let mu_d = cfg.mu / 252.0;
    let mut rng = stream(cfg.seed, day as u64);
    let poisson = if cfg.jump_intensity > 0.0 {
        Some(
            Poisson::new(cfg.jump_intensity * dt)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?,
        )
    } else {
        None
    };
    let jump_size =
        Normal::new(0.0, cfg.jump_size_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut path = DayPath {
        increments: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        jump: Vec::with_capacity(n),
        iv: 0.0,
        jump_var: 0.0,
    };
    for i in 0..n {
        let sigma = match cfg.vol {
            VolProcess::Constant { sigma } => sigma,
            VolProcess::TwoState { low, high, .. } => {
                if regimes[i] {
                    high
                } else {
                    low
                }
            }
        };
        let xi: f64 = StandardNormal.sample(&mut rng);
        let mut jump = 0.0;
        if let Some(pois) = &poisson {
            let count: f64 = pois.sample(&mut rng);
            for _ in 0..count as u64 {
                let k = jump_size.sample(&mut rng);
                jump += k;
                path.jump_var += k * k;
            }
        }
        path.iv += sigma * sigma * dt;
        path.increments
            .push((mu_d - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * xi + jump);
        path.sigma.push(sigma);
        path.jump.push(jump);
    }
    Ok(path)
}

/// Simulates a panel of intraday bars. Each day opens at the previous close.
/// Days are drawn in parallel from per-day streams, so the output does not
/// depend on the thread count.
pub fn simulate_jump_diffusion(cfg: &SimConfig) -> Result<(Panel, SimTruth)> {
    cfg.validate()?;
    let n = cfg.n_intraday;
    let regimes = regime_path(cfg);
    let paths: Vec<DayPath> = (0..cfg.n_days)
        .into_par_iter()
        .map(|d| {
            let r = if regimes.is_empty() {
                &[][..]
            } else {
                &regimes[d * n..(d + 1) * n]
            };
            simulate_day(cfg, d, r)
        })
        .collect::<Result<_>>()?;
    let dates = business_days(cfg.start_date, cfg.n_days);
    let times = session_times(n);
    let mut log_p = cfg.start_price.ln();
    let mut days = Vec::with_capacity(cfg.n_days);
    let mut jumps = Vec::new();
    for (d, path) in paths.iter().enumerate() {
        let mut prices = Vec::with_capacity(n + 1);
        prices.push(log_p.exp());
        for inc in &path.increments {
            log_p += inc;
            prices.push(log_p.exp());
        }
        if !log_p.is_finite() {
            return Err(Error::Divergence(format!("log price overflow on day {d}")));
        }
        days.push(TradingDay::from_prices(dates[d], times.clone(), prices)?);
        jumps.extend(
            path.jump
                .iter()
                .enumerate()
                .filter(|(_, j)| **j != 0.0)
                .map(|(step, &size)| Jump { day: d, step, size }),
        );
    }
    let truth = SimTruth {
        dates: dates.clone(),
        iv: paths.iter().map(|p| p.iv).collect(),
        jump_var: paths.iter().map(|p| p.jump_var).collect(),
        jumps,
    };
    Ok((Panel::new(days)?, truth))
}

/// Writes the truth sidecar (`date,iv,jump_var`).
pub fn write_truth_csv<W: Write>(w: W, truth: &SimTruth) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "iv", "jump_var"])?;
    for ((d, iv), jv) in truth.dates.iter().zip(&truth.iv).zip(&truth.jump_var) {
        wtr.write_record([d.to_string(), fmt_f64(*iv), fmt_f64(*jv)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parameters of the path-dependent daily generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdvSimConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// (β₀, β₁, β₂).
    pub betas: [f64; 3],
    pub noise_std: f64,
    pub n_days: usize,
    pub seed: u64,
    pub start_price: f64,
    pub start_date: NaiveDate,
    /// Smallest variance used to draw a return.
    pub variance_floor: f64,
    /// RV above this aborts the run.
    pub overflow_guard: f64,
    pub convention: ReturnConvention,
}

impl Default for PdvSimConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.5,
            lambda2: 0.8,
            betas: [1e-4, -5e-3, 0.5],
            noise_std: 2e-6,
            n_days: 3000,
            seed: 0,
            start_price: 100.0,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            variance_floor: 1e-8,
            overflow_guard: 1.0,
            convention: ReturnConvention::Cumulative,
        }
    }
}

/// Daily output of [`simulate_pdv_panel`]. Index 0 has no history, so its
/// features are NaN and its RV is β₀ plus noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdvPanel {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
    pub rv: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

/// Generates closes and RV where `RV_t = β₀ + β₁R1_t + β₂R2_t + ε_t`.
///
/// The day-`t` simple return is normal with variance `max(RV_{t−1}, floor)`;
/// `R1_t`, `R2_t` are then the kernel features of closes up to and
/// including `t`, computed exactly as the feature module does.
pub fn simulate_pdv_panel(cfg: &PdvSimConfig) -> Result<PdvPanel> {
    if cfg.betas[2] < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "β₂ must be >= 0, got {}",
            cfg.betas[2]
        )));
    }
    if cfg.n_days < 2 || !(cfg.noise_std >= 0.0) || !(cfg.variance_floor > 0.0) {
        return Err(Error::InvalidParameter(
            "need n_days >= 2, noise >= 0, floor > 0".into(),
        ));
    }
    let w1 = KernelParam::new(cfg.lambda1)?.weights();
    let w2 = KernelParam::new(cfg.lambda2)?.weights();
    let [b0, b1, b2] = cfg.betas;
    let mut rng = stream(cfg.seed, 0);
    let n = cfg.n_days;
    let mut closes = Vec::with_capacity(n);
    let mut rv = Vec::with_capacity(n);
    let mut r1 = vec![f64::NAN; n];
    let mut r2 = vec![f64::NAN; n];
    closes.push(cfg.start_price);
    let noise = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        cfg.noise_std * z
    };
    rv.push(b0 + noise(&mut rng));
    for t in 1..n {
        let var = rv[t - 1].max(cfg.variance_floor);
        let z: f64 = StandardNormal.sample(&mut rng);
        let ret = var.sqrt() * z;
        let price = closes[t - 1] * (1.0 + ret);
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::Divergence(format!("price {price} on day {t}")));
        }
        closes.push(price);
        r1[t] = price_feature_at(&closes, t, &w1, cfg.convention, |r| r);
        r2[t] = price_feature_at(&closes, t, &w2, cfg.convention, |r| r * r);
        let v = b0 + b1 * r1[t] + b2 * r2[t] + noise(&mut rng);
        if !v.is_finite() || v > cfg.overflow_guard {
            return Err(Error::Divergence(format!(
                "RV {v} on day {t} exceeds {}",
                cfg.overflow_guard
            )));
        }
        rv.push(v);
    }
    Ok(PdvPanel {
        dates: business_days(cfg.start_date, n),
        closes,
        rv,
        r1,
        r2,
    })
}
