use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forecast::ForecastRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosR2Row {
    pub model: String,
    /// Percent.
    pub r2_oos: f64,
    /// MSPE-adjusted statistic.
    pub statistic: f64,
    /// One-sided p-value against the benchmark.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosR2Result {
    pub benchmark: String,
    pub rows: Vec<OosR2Row>,
}

/// MSPE-adjusted test of `model` against `bench` on realized `rv`:
/// `f_t = (RV − RV⁰)² − (RV − RVʲ)² + (RV⁰ − RVʲ)²`, statistic
/// `mean(f) / (sd(f)/√n)`, p-value `1 − Φ(statistic)`.
pub fn mspe_adjusted(rv: &[f64], bench: &[f64], model: &[f64]) -> (f64, f64) {
    let n = rv.len() as f64;
    let f: Vec<f64> = rv
        .iter()
        .zip(bench)
        .zip(model)
        .map(|((y, b), m)| (y - b).powi(2) - (y - m).powi(2) + (b - m).powi(2))
        .collect();
    let mean = f.iter().sum::<f64>() / n;
    let var = if f.len() > 1 {
        f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let stat = if var > 0.0 {
        mean / (var / n).sqrt()
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let p = 1.0 - Normal::standard().cdf(stat);
    (stat, p)
}

/// Out-of-sample R² (percent) of every model against `benchmark`, with the
/// MSPE-adjusted test. All models must share dates and realized values.
pub fn oos_r2(runs: &[(String, Vec<ForecastRecord>)], benchmark: &str) -> Result<OosR2Result> {
    let bench = runs
        .iter()
        .find(|(n, _)| n == benchmark)
        .map(|(_, r)| r)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("benchmark `{benchmark}` not among the models"))
        })?;
    if bench.is_empty() {
        return Err(Error::EmptyInput("benchmark has no forecasts".into()));
    }
    let rv: Vec<f64> = bench.iter().map(|r| r.realized).collect();
    let b: Vec<f64> = bench.iter().map(|r| r.predicted).collect();
    let sse0: f64 = rv.iter().zip(&b).map(|(y, f)| (y - f).powi(2)).sum();
    let mut rows = Vec::with_capacity(runs.len());
    for (name, recs) in runs {
        let misaligned: Vec<_> = recs
            .iter()
            .zip(bench)
            .filter(|(a, z)| a.target_date != z.target_date || a.realized != z.realized)
            .map(|(a, _)| a.target_date)
            .collect();
        if recs.len() != bench.len() || !misaligned.is_empty() {
            return Err(Error::Evaluation {
                reason: format!("{name} is not aligned with benchmark {benchmark}"),
                dates: misaligned,
            });
        }
        let m: Vec<f64> = recs.iter().map(|r| r.predicted).collect();
        let sse: f64 = rv.iter().zip(&m).map(|(y, f)| (y - f).powi(2)).sum();
        let (statistic, p_value) = mspe_adjusted(&rv, &b, &m);
        rows.push(OosR2Row {
            model: name.clone(),
            r2_oos: 100.0 * (1.0 - sse / sse0),
            statistic,
            p_value,
        });
    }
    Ok(OosR2Result {
        benchmark: benchmark.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn recs(pred: &[f64], rv: &[f64]) -> Vec<ForecastRecord> {
        pred.iter()
            .zip(rv)
            .enumerate()
            .map(|(i, (p, r))| ForecastRecord {
                target_date: NaiveDate::from_ymd_opt(2020, 1, 1 + i as u32).unwrap(),
                horizon: 1,
                predicted: *p,
                realized: *r,
            })
            .collect()
    }

    #[test]
    fn benchmark_against_itself() {
        let rv = [1.0, 2.0, 3.0, 2.5];
        let b = recs(&[1.5, 1.5, 2.0, 2.0], &rv);
        let r = oos_r2(&[("b".into(), b.clone()), ("c".into(), b)], "b").unwrap();
        for row in &r.rows {
            assert_eq!(row.r2_oos, 0.0);
            assert_eq!(row.statistic, 0.0);
            assert_eq!(row.p_value, 0.5);
        }
    }

    #[test]
    fn missing_benchmark() {
        let b = recs(&[1.0], &[1.0]);
        assert!(matches!(
            oos_r2(&[("b".into(), b)], "x"),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn half_the_errors() {
        // Benchmark errors (2, 2), model errors (√2, √2) → SSE 8 vs 4.
        let rv = [0.0, 0.0];
        let s = 2f64.sqrt();
        let r = oos_r2(
            &[
                ("b".into(), recs(&[2.0, -2.0], &rv)),
                ("m".into(), recs(&[s, -s], &rv)),
            ],
            "b",
        )
        .unwrap();
        assert!((r.rows[1].r2_oos - 50.0).abs() < 1e-12);
    }
}
