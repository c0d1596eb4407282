use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "HMSE")]
    Hmse,
    #[serde(rename = "HMAE")]
    Hmae,
    #[serde(rename = "QLIKE")]
    Qlike,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Mse,
        LossKind::Mae,
        LossKind::Hmse,
        LossKind::Hmae,
        LossKind::Qlike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "MSE",
            LossKind::Mae => "MAE",
            LossKind::Hmse => "HMSE",
            LossKind::Hmae => "HMAE",
            LossKind::Qlike => "QLIKE",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown loss `{s}`")))
    }
}

/// Loss of one forecast `predicted` against realized `rv`.
pub fn loss_value(kind: LossKind, predicted: f64, rv: f64) -> f64 {
    match kind {
        LossKind::Mse => (rv - predicted).powi(2),
        LossKind::Mae => (rv - predicted).abs(),
        LossKind::Hmse => (1.0 - predicted / rv).powi(2),
        LossKind::Hmae => (1.0 - predicted / rv).abs(),
        LossKind::Qlike => predicted.ln() + rv / predicted,
    }
}

fn check_positive(records: &[ForecastRecord]) -> Result<()> {
    let bad: Vec<NaiveDate> = records
        .iter()
        .filter(|r| !(r.realized > 0.0 && r.predicted > 0.0))
        .map(|r| r.target_date)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Evaluation {
            reason: "ratio and log losses need realized and predicted variance > 0".into(),
            dates: bad,
        });
    }
    Ok(())
}

/// Mean of each loss over the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub n: usize,
    pub values: BTreeMap<LossKind, f64>,
}

pub fn losses(records: &[ForecastRecord]) -> Result<LossSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no forecast records to evaluate".into()));
    }
    check_positive(records)?;
    let n = records.len() as f64;
    let values = LossKind::ALL
        .into_iter()
        .map(|k| {
            let total: f64 = records
                .iter()
                .map(|r| loss_value(k, r.predicted, r.realized))
                .sum();
            (k, total / n)
        })
        .collect();
    Ok(LossSummary {
        n: records.len(),
        values,
    })
}

/// Per-date losses of several models on a common calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    pub models: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `values[kind][model][date]`.
    pub values: BTreeMap<LossKind, Vec<Vec<f64>>>,
}

impl LossMatrix {
    pub fn series(&self, kind: LossKind) -> &[Vec<f64>] {
        &self.values[&kind]
    }

    pub fn mean(&self, kind: LossKind, model: usize) -> f64 {
        let s = &self.values[&kind][model];
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// Builds the loss matrix. Every model must forecast exactly the same dates
/// with the same realized values.
pub fn loss_matrix(runs: &[(String, Vec<ForecastRecord>)]) -> Result<LossMatrix> {
    let Some((_, first)) = runs.first() else {
        return Err(Error::EmptyInput("no models to evaluate".into()));
    };
    if first.is_empty() {
        return Err(Error::EmptyInput("no forecast records to evaluate".into()));
    }
    let dates: Vec<NaiveDate> = first.iter().map(|r| r.target_date).collect();
    for (name, recs) in runs {
        check_positive(recs)?;
        let mismatched: Vec<NaiveDate> = recs
            .iter()
            .zip(first)
            .filter(|(a, b)| a.target_date != b.target_date || a.realized != b.realized)
            .map(|(a, _)| a.target_date)
            .collect();
        if recs.len() != first.len() || !mismatched.is_empty() {
            return Err(Error::Evaluation {
                reason: format!(
                    "{name} is not aligned with {} ({} vs {} records)",
                    runs[0].0,
                    recs.len(),
                    first.len()
                ),
                dates: mismatched,
            });
        }
    }
    let values = LossKind::ALL
        .into_iter()
        .map(|k| {
            let per_model = runs
                .iter()
                .map(|(_, recs)| {
                    recs.iter()
                        .map(|r| loss_value(k, r.predicted, r.realized))
                        .collect()
                })
                .collect();
            (k, per_model)
        })
        .collect();
    Ok(LossMatrix {
        models: runs.iter().map(|(n, _)| n.clone()).collect(),
        dates,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(day: u32, predicted: f64, realized: f64) -> ForecastRecord {
        ForecastRecord {
            target_date: NaiveDate::from_ymd_opt(2020, 1, day).unwrap(),
            horizon: 1,
            predicted,
            realized,
        }
    }

    #[test]
    fn single_record_by_hand() {
        let s = losses(&[rec(1, 2e-4, 1e-4)]).unwrap();
        assert!((s.values[&LossKind::Mse] - 1e-8).abs() < 1e-22);
        assert!((s.values[&LossKind::Qlike] - ((2e-4f64).ln() + 0.5)).abs() < 1e-12);
        assert_eq!(s.values[&LossKind::Hmse], 1.0);
        assert_eq!(s.values[&LossKind::Hmae], 1.0);
    }

    #[test]
    fn nonpositive_realized_lists_dates() {
        match losses(&[rec(1, 1e-4, 1e-4), rec(2, 1e-4, 0.0)]) {
            Err(Error::Evaluation { dates, .. }) => {
                assert_eq!(dates, vec![NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn misaligned_models_rejected() {
        let a = vec![rec(1, 1e-4, 1e-4), rec(2, 1e-4, 1e-4)];
        let b = vec![rec(1, 1e-4, 1e-4), rec(3, 1e-4, 1e-4)];
        assert!(loss_matrix(&[("a".into(), a.clone()), ("b".into(), b)]).is_err());
        let m = loss_matrix(&[("a".into(), a.clone()), ("c".into(), a)]).unwrap();
        assert_eq!(m.series(LossKind::Mae).len(), 2);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("qlike".parse::<LossKind>().unwrap(), LossKind::Qlike);
        assert!("mape".parse::<LossKind>().is_err());
    }
}
