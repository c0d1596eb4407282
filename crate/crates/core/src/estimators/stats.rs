use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub(crate) fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Sample autocorrelations ρ̂₁..ρ̂_L around the full-sample mean.
pub fn autocorrelations(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag == 0 || n <= max_lag {
        return Err(Error::InsufficientData {
            what: format!("autocorrelations up to lag {max_lag}"),
            required: max_lag + 1,
            available: n,
        });
    }
    let m = mean(series);
    let dev: Vec<f64> = series.iter().map(|v| v - m).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((1..=max_lag)
        .map(|k| {
            dev[k..]
                .iter()
                .zip(&dev[..n - k])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
}

/// Ljung–Box portmanteau test with a χ²(lags) reference distribution.
pub fn ljung_box(series: &[f64], lags: usize) -> Result<LjungBox> {
    let rho = autocorrelations(series, lags)?;
    let n = series.len() as f64;
    let q = n
        * (n + 2.0)
        * rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * r / (n - (i + 1) as f64))
            .sum::<f64>();
    let chi = ChiSquared::new(lags as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(LjungBox {
        statistic: q,
        p_value: chi.sf(q),
        lags,
    })
}

/// Descriptive statistics. Kurtosis is raw (a normal sample gives ≈ 3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub max: f64,
    pub min: f64,
}

/// Mean, sample std, moment skewness, raw kurtosis, max and min.
/// Skewness and kurtosis are NaN for a constant series.
pub fn describe(series: &[f64]) -> Result<Description> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "descriptive statistics".into(),
            required: 2,
            available: n,
        });
    }
    let m = mean(series);
    let nf = n as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in series {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Description {
        n,
        mean: m,
        std,
        skewness,
        kurtosis,
        max: series.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: series.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
