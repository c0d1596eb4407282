use std::collections::BTreeMap;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::catalog::{Block, Component, ModelSpec, PriceFeature, SameDay};
use crate::error::{Error, Result};
use crate::estimators::DailyComponents;
use crate::features::{pd_transform, trailing_mean, trend_feature, vol_feature, KernelParam};

/// Daily inputs for model building: calendar, closes and component series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelData {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
    series: BTreeMap<Component, Vec<f64>>,
}

impl ModelData {
    /// Data holding only closes and RV, enough for RV- and price-based models.
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>, rv: Vec<f64>) -> Result<Self> {
        let mut data = Self {
            dates,
            closes,
            series: BTreeMap::new(),
        };
        data.check_len("closes", data.closes.len())?;
        data.insert(Component::Rv, rv)?;
        Ok(data)
    }

    /// Full data from an estimator panel and the matching daily closes.
    pub fn from_components(rows: &[DailyComponents], closes: Vec<f64>) -> Result<Self> {
        let dates = rows.iter().map(|r| r.date).collect();
        let col = |f: fn(&DailyComponents) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let mut data = Self::new(dates, closes, col(|r| r.rv))?;
        data.insert(Component::Cj, col(|r| r.cj))?;
        data.insert(Component::Cv, col(|r| r.cv))?;
        data.insert(Component::RsPos, col(|r| r.rs_pos))?;
        data.insert(Component::RsNeg, col(|r| r.rs_neg))?;
        data.insert(Component::RexPos, col(|r| r.rex_pos))?;
        data.insert(Component::RexNeg, col(|r| r.rex_neg))?;
        data.insert(Component::RexMod, col(|r| r.rex_mod))?;
        data.insert(Component::ReqPos, col(|r| r.req_pos))?;
        data.insert(Component::ReqNeg, col(|r| r.req_neg))?;
        data.insert(Component::ReqMod, col(|r| r.req_mod))?;
        Ok(data)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.dates.len() {
            return Err(Error::InvalidParameter(format!(
                "{what} has {len} values for {} dates",
                self.dates.len()
            )));
        }
        Ok(())
    }

    pub fn insert(&mut self, component: Component, values: Vec<f64>) -> Result<()> {
        self.check_len(component.label(), values.len())?;
        self.series.insert(component, values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn series(&self, component: Component) -> Result<&[f64]> {
        self.series
            .get(&component)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingComponent(component.label().to_string()))
    }

    pub fn rv(&self) -> &[f64] {
        &self.series[&Component::Rv]
    }

    /// The first `len` dates only.
    pub fn truncated(&self, len: usize) -> ModelData {
        let len = len.min(self.len());
        ModelData {
            dates: self.dates[..len].to_vec(),
            closes: self.closes[..len].to_vec(),
            series: self
                .series
                .iter()
                .map(|(k, v)| (*k, v[..len].to_vec()))
                .collect(),
        }
    }

    /// Mutable access for perturbation experiments.
    pub fn series_mut(&mut self, component: Component) -> Option<&mut Vec<f64>> {
        self.series.get_mut(&component)
    }

    pub fn closes_mut(&mut self) -> &mut Vec<f64> {
        &mut self.closes
    }
}

/// Regressor values indexed by information date: entry `o` only uses data
/// dated `o` or earlier. NaN marks dates without enough history.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl RegressorTable {
    pub fn row(&self, o: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[o]).collect()
    }

    pub fn row_is_complete(&self, o: usize) -> bool {
        self.columns.iter().all(|c| c[o].is_finite())
    }

    /// First information date with every regressor defined.
    pub fn first_complete(&self) -> Option<usize> {
        let n = self.columns.first().map_or(0, Vec::len);
        (0..n).find(|&o| self.row_is_complete(o))
    }
}

fn horizon_name(base: &str, h: usize) -> String {
    if h == 1 {
        format!("{base}_lag1")
    } else {
        format!("{base}_mean{h}")
    }
}

/// Computes every regressor of `spec` on the whole calendar.
pub fn regressor_table(spec: &ModelSpec, data: &ModelData) -> Result<RegressorTable> {
    spec.validate()?;
    let kernel = |i: usize| KernelParam::with_cutoff(spec.lambdas[i], spec.cutoff);
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let push_har =
        |base: &str, series: &[f64], names: &mut Vec<String>, columns: &mut Vec<Vec<f64>>| {
            for &h in &spec.horizons {
                names.push(horizon_name(base, h));
                columns.push(trailing_mean(series, h));
            }
        };

    for block in spec.family.blocks() {
        match block {
            Block::Har(c) => push_har(c.label(), data.series(c)?, &mut names, &mut columns),
            Block::HarFeature(f, i) => {
                let feat = match f {
                    PriceFeature::R1 => trend_feature(data.closes(), kernel(i)?, spec.convention)?,
                    PriceFeature::R2 => vol_feature(data.closes(), kernel(i)?, spec.convention)?,
                };
                push_har(&feat.kind.name(), &feat.values, &mut names, &mut columns);
            }
            Block::HarPd(c, i) => {
                let feat = pd_transform(data.series(c)?, kernel(i)?, c.label());
                push_har(&feat.kind.name(), &feat.values, &mut names, &mut columns);
            }
            Block::SameDay(term, idx) => {
                names.push(term.name().to_string());
                columns.push(same_day_column(
                    term,
                    idx.map(kernel).transpose()?,
                    spec,
                    data,
                )?);
            }
        }
    }
    Ok(RegressorTable { names, columns })
}

fn same_day_column(
    term: SameDay,
    kernel: Option<KernelParam>,
    spec: &ModelSpec,
    data: &ModelData,
) -> Result<Vec<f64>> {
    let closes = data.closes();
    let r1 =
        || trend_feature(closes, kernel.expect("kernel block"), spec.convention).map(|f| f.values);
    let r2 =
        || vol_feature(closes, kernel.expect("kernel block"), spec.convention).map(|f| f.values);
    let one_day = || -> Vec<f64> {
        let mut out = vec![f64::NAN; closes.len()];
        for t in 1..closes.len() {
            out[t] = (closes[t] - closes[t - 1]) / closes[t - 1];
        }
        out
    };
    Ok(match term {
        SameDay::R1 => r1()?,
        SameDay::R2 => r2()?,
        SameDay::SqrtR2 => r2()?.into_iter().map(f64::sqrt).collect(),
        SameDay::R1Squared => r1()?.into_iter().map(|v| v * v).collect(),
        SameDay::AbsDevR1 => {
            // Expanding mean over the defined history keeps the column causal.
            let r1 = r1()?;
            let mut out = vec![f64::NAN; r1.len()];
            let (mut sum, mut count) = (0.0, 0usize);
            for (o, v) in r1.iter().enumerate() {
                if v.is_finite() {
                    sum += v;
                    count += 1;
                    out[o] = (v - sum / count as f64).abs();
                }
            }
            out
        }
        SameDay::Return => one_day(),
        SameDay::ReturnSquared => one_day().into_iter().map(|v| v * v).collect(),
    })
}

/// Regression data: target RV by date and named regressor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    /// Target dates.
    pub dates: Vec<NaiveDate>,
    /// Index of each target date in the source calendar.
    pub target_index: Vec<usize>,
    pub target: Vec<f64>,
    pub names: Vec<String>,
    /// Column-major regressor values, one vector per name.
    pub columns: Vec<Vec<f64>>,
    /// Information-date lag between regressors and target.
    pub shift: usize,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Keeps the rows at the given positions.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            dates: rows.iter().map(|&i| self.dates[i]).collect(),
            target_index: rows.iter().map(|&i| self.target_index[i]).collect(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            shift: self.shift,
        }
    }

    /// Builds a design directly from columns, with synthetic target indices.
    pub fn from_columns(
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target: Vec<f64>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidParameter(
                "one name per column required".into(),
            ));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != target.len()) {
            return Err(Error::InvalidParameter(format!(
                "column of length {} for {} targets",
                c.len(),
                target.len()
            )));
        }
        let n = target.len();
        let epoch = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        Ok(Self {
            dates: (0..n)
                .map(|i| epoch + chrono::Days::new(i as u64))
                .collect(),
            target_index: (0..n).collect(),
            target,
            names,
            columns,
            shift: 0,
        })
    }
}

/// Assembles a design from a regressor table: row for target date `t` uses
/// information date `t − shift`. Only targets inside `targets` (a range of
/// calendar indices) with a complete regressor row are kept.
pub fn design_from_table(
    table: &RegressorTable,
    data: &ModelData,
    shift: usize,
    targets: Range<usize>,
) -> Result<DesignMatrix> {
    let rv = data.rv();
    let end = targets.end.min(rv.len());
    let mut rows = Vec::new();
    for t in targets.start.max(shift)..end {
        if rv[t].is_finite() && table.row_is_complete(t - shift) {
            rows.push(t);
        }
    }
    let k = table.names.len();
    if rows.len() <= k + 1 {
        let first = table.first_complete().map_or(rv.len(), |o| o + shift);
        return Err(Error::InsufficientData {
            what: format!(
                "design rows (first usable target index {first}, {} calendar dates, {k} regressors)",
                rv.len()
            ),
            required: k + 2,
            available: rows.len(),
        });
    }
    Ok(DesignMatrix {
        dates: rows.iter().map(|&t| data.dates()[t]).collect(),
        target_index: rows.clone(),
        target: rows.iter().map(|&t| rv[t]).collect(),
        names: table.names.clone(),
        columns: table
            .columns
            .iter()
            .map(|c| rows.iter().map(|&t| c[t - shift]).collect())
            .collect(),
        shift,
    })
}

/// In-sample design of `spec` over the whole calendar.
pub fn build_design(spec: &ModelSpec, data: &ModelData) -> Result<DesignMatrix> {
    let table = regressor_table(spec, data)?;
    design_from_table(&table, data, spec.family.default_shift(), 0..data.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelFamily;

    fn toy_data(n: usize) -> ModelData {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates: Vec<_> = (0..n)
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        let closes: Vec<f64> = (0..n).map(|i| 100.0 + (i as f64 * 0.7).sin()).collect();
        let rv: Vec<f64> = (0..n)
            .map(|i| 1e-4 * (1.5 + (i as f64 * 0.3).cos()))
            .collect();
        let mut data = ModelData::new(dates, closes, rv.clone()).unwrap();
        for (j, c) in Component::ALL.iter().enumerate().skip(1) {
            let v = rv
                .iter()
                .enumerate()
                .map(|(i, x)| x * (0.2 + 0.05 * (((i * (j + 3)) % 7) as f64)))
                .collect();
            data.insert(*c, v).unwrap();
        }
        data
    }

    #[test]
    fn har_rv_row_count() {
        let d = build_design(&ModelSpec::new(ModelFamily::HarRv), &toy_data(100)).unwrap();
        assert_eq!(d.cols(), 3);
        assert_eq!(d.rows(), 78);
        assert_eq!(d.names, vec!["RV_lag1", "RV_mean5", "RV_mean22"]);
        // Row for target index 22 uses RV[0..22].
        let rv = toy_data(100).rv().to_vec();
        assert_eq!(d.target_index[0], 22);
        assert_eq!(d.columns[0][0], rv[21]);
        assert_eq!(d.columns[2][0], rv[0..22].iter().sum::<f64>() / 22.0);
    }

    #[test]
    fn column_counts_match_equations() {
        let data = toy_data(120);
        let expect = [
            (ModelFamily::HarRv, 3),
            (ModelFamily::HarCj, 6),
            (ModelFamily::HarRs, 6),
            (ModelFamily::HarRex, 9),
            (ModelFamily::HarReq, 9),
            (ModelFamily::HarPdRv, 3),
            (ModelFamily::HarPdCj, 9),
            (ModelFamily::HarPdRs, 9),
            (ModelFamily::HarPdRex, 12),
            (ModelFamily::HarPdReq, 12),
            (ModelFamily::PdvBase, 2),
            (ModelFamily::PdvNull, 2),
            (ModelFamily::M1, 2),
            (ModelFamily::M2, 2),
            (ModelFamily::M3, 1),
            (ModelFamily::M4, 1),
            (ModelFamily::M5, 1),
        ];
        for (fam, k) in expect {
            let d = build_design(&ModelSpec::new(fam), &data).unwrap();
            assert_eq!(d.cols(), k, "{fam}");
            assert!(d.columns.iter().flatten().all(|v| v.is_finite()), "{fam}");
        }
    }

    #[test]
    fn pd_rows_start_one_day_later() {
        let d = build_design(&ModelSpec::new(ModelFamily::HarPdCj), &toy_data(100)).unwrap();
        assert_eq!(d.target_index[0], 23);
        assert_eq!(d.names[3], "PDCJ_lag1");
        assert_eq!(d.names[2], "R2_mean22");
    }

    #[test]
    fn same_day_models_use_same_day_features() {
        let data = toy_data(60);
        let d = build_design(&ModelSpec::new(ModelFamily::M2), &data).unwrap();
        assert_eq!(d.shift, 0);
        assert_eq!(d.target_index[0], 1);
        let r2 = vol_feature(
            data.closes(),
            KernelParam::new(1.0).unwrap(),
            Default::default(),
        )
        .unwrap();
        assert_eq!(d.columns[1][5], r2.values[6]);
    }

    #[test]
    fn insufficient_history_reports_counts() {
        let err = build_design(&ModelSpec::new(ModelFamily::HarRv), &toy_data(24)).unwrap_err();
        match err {
            Error::InsufficientData {
                required,
                available,
                ..
            } => {
                assert_eq!(required, 5);
                assert_eq!(available, 2);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_component_is_named() {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates: Vec<_> = (0..50).map(|i| start + chrono::Days::new(i)).collect();
        let data = ModelData::new(dates, vec![1.0; 50], vec![1.0; 50]).unwrap();
        let err = build_design(&ModelSpec::new(ModelFamily::HarCj), &data).unwrap_err();
        assert!(matches!(err, Error::MissingComponent(ref c) if c == "CV"));
    }
}
