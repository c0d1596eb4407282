//! Rolling fixed-window, direct h-step-ahead forecasting.
//!
//! The out-of-sample block is the last `out_len` dates of the calendar. The
//! first origin is the date just before it; origin `o` forecasts RV at
//! `o + h` from regressors dated `o`, with a model fitted on exactly
//! `window` rows whose targets are `o − window + 1 ..= o`. An out-of-sample
//! block of M dates therefore yields `M − h + 1` forecasts.
//!
//! Kernel decays (and the LASSO penalty) are re-estimated on the first
//! origin of every block of `refit_lambda_every` origins; coefficients are
//! refit at every origin. Every fit sees only data dated at or before its
//! origin.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::models::{
    design_from_table, fit_fixed, fit_model_on, regressor_table, FitOptions, ModelData, ModelSpec,
    Shrinkage,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub window: usize,
    pub horizon: usize,
    pub out_len: usize,
    pub refit_lambda_every: usize,
    /// Forecasts below this are raised to it.
    pub floor: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: 4016,
            horizon: 1,
            out_len: 600,
            refit_lambda_every: 20,
            floor: 1e-12,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.horizon == 0 || self.out_len == 0 || self.refit_lambda_every == 0
        {
            return Err(Error::InvalidParameter(
                "window >= 3, horizon >= 1, out_len >= 1 and refit_lambda_every >= 1 required"
                    .into(),
            ));
        }
        if self.horizon > self.out_len {
            return Err(Error::InvalidParameter(format!(
                "horizon {} exceeds the out-of-sample length {}",
                self.horizon, self.out_len
            )));
        }
        if !(self.floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "floor must be > 0, got {}",
                self.floor
            )));
        }
        Ok(())
    }

    /// Number of forecasts produced: `out_len − horizon + 1`.
    pub fn record_count(&self) -> usize {
        self.out_len + 1 - self.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    #[serde(rename = "date")]
    pub target_date: NaiveDate,
    pub horizon: usize,
    pub predicted: f64,
    pub realized: f64,
}

/// Parameters held fixed over one block of origins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub origin_date: NaiveDate,
    pub lambdas: Vec<f64>,
    pub boundary: Vec<bool>,
    pub penalty: Option<f64>,
}

/// One forecast with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginForecast {
    pub record: ForecastRecord,
    pub origin_date: NaiveDate,
    pub fit_rows: usize,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub model: String,
    pub config: ForecastConfig,
    pub records: Vec<ForecastRecord>,
    pub blocks: Vec<BlockParams>,
    pub floor_count: usize,
}

/// Calendar geometry of a rolling run.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    first_origin: usize,
}

fn layout(spec: &ModelSpec, data: &ModelData, cfg: &ForecastConfig) -> Result<Layout> {
    cfg.validate()?;
    spec.validate()?;
    let n = data.len();
    let table = regressor_table(
        spec,
        &data.truncated(n.min(cfg.out_len + cfg.window + cfg.horizon + 64)),
    )?;
    let burn = table.first_complete().unwrap_or(usize::MAX / 4);
    let required = burn + cfg.horizon + cfg.window + cfg.out_len;
    if n < required {
        return Err(Error::InsufficientData {
            what: format!(
                "calendar length for {} (window {} + horizon {} + out-of-sample {} + {} burn-in dates)",
                spec.name(),
                cfg.window,
                cfg.horizon,
                cfg.out_len,
                burn
            ),
            required,
            available: n,
        });
    }
    Ok(Layout {
        first_origin: n - cfg.out_len - 1,
    })
}

fn window_targets(origin: usize, window: usize) -> std::ops::Range<usize> {
    origin + 1 - window..origin + 1
}

/// Estimates the block-level parameters at `origin` from data up to it.
fn block_params(
    spec: &ModelSpec,
    data: &ModelData,
    cfg: &ForecastConfig,
    opts: &FitOptions,
    origin: usize,
) -> Result<BlockParams> {
    let needs_lambdas = spec.family.lambda_count() > 0 && opts.estimate_lambdas;
    let mut params = BlockParams {
        origin_date: data.dates()[origin],
        lambdas: spec.lambdas.clone(),
        boundary: Vec::new(),
        penalty: None,
    };
    if !needs_lambdas && spec.shrinkage == Shrinkage::None {
        return Ok(params);
    }
    let past = data.truncated(origin + 1);
    let (fit, _) = fit_model_on(
        spec,
        &past,
        cfg.horizon,
        window_targets(origin, cfg.window),
        opts,
    )?;
    if let Some(l) = fit.lambdas_hat {
        params.lambdas = l;
        params.boundary = fit.boundary;
    }
    params.penalty = fit.lasso.map(|l| l.penalty);
    Ok(params)
}

fn forecast_with(
    spec: &ModelSpec,
    data: &ModelData,
    cfg: &ForecastConfig,
    opts: &FitOptions,
    params: &BlockParams,
    origin: usize,
) -> Result<OriginForecast> {
    let spec = spec.clone().with_lambdas(params.lambdas.clone());
    let past = data.truncated(origin + 1);
    let table = regressor_table(&spec, &past)?;
    let design = design_from_table(
        &table,
        &past,
        cfg.horizon,
        window_targets(origin, cfg.window),
    )?;
    if design.rows() != cfg.window {
        return Err(Error::InsufficientData {
            what: format!("complete fit rows at origin {}", data.dates()[origin]),
            required: cfg.window,
            available: design.rows(),
        });
    }
    let fit = fit_fixed(&spec, &design, params.penalty, opts)?;
    let raw = fit.predict(&table.row(origin));
    if !raw.is_finite() {
        return Err(Error::Degenerate(format!(
            "non-finite forecast at origin {}",
            data.dates()[origin]
        )));
    }
    let floored = raw < cfg.floor;
    let target = origin + cfg.horizon;
    Ok(OriginForecast {
        record: ForecastRecord {
            target_date: data.dates()[target],
            horizon: cfg.horizon,
            predicted: if floored { cfg.floor } else { raw },
            realized: data.rv()[target],
        },
        origin_date: data.dates()[origin],
        fit_rows: design.rows(),
        floored,
    })
}

/// The `k`-th forecast of a rolling run, computed on its own. Identical to
/// the `k`-th record of [`rolling_forecast`].
pub fn forecast_origin(
    spec: &ModelSpec,
    data: &ModelData,
    cfg: &ForecastConfig,
    opts: &FitOptions,
    k: usize,
) -> Result<OriginForecast> {
    let lay = layout(spec, data, cfg)?;
    if k >= cfg.record_count() {
        return Err(Error::InvalidParameter(format!(
            "origin {k} outside 0..{}",
            cfg.record_count()
        )));
    }
    let block_start = k - k % cfg.refit_lambda_every;
    let params = block_params(spec, data, cfg, opts, lay.first_origin + block_start)?;
    forecast_with(spec, data, cfg, opts, &params, lay.first_origin + k)
}

/// Rolling out-of-sample forecasts of `spec`. Blocks and origins run in
/// parallel; the output does not depend on the thread count.
pub fn rolling_forecast(
    spec: &ModelSpec,
    data: &ModelData,
    cfg: &ForecastConfig,
    opts: &FitOptions,
) -> Result<ForecastRun> {
    let lay = layout(spec, data, cfg)?;
    let count = cfg.record_count();
    let starts: Vec<usize> = (0..count).step_by(cfg.refit_lambda_every).collect();
    let blocks: Vec<BlockParams> = starts
        .par_iter()
        .map(|&b| block_params(spec, data, cfg, opts, lay.first_origin + b))
        .collect::<Result<_>>()?;
    let forecasts: Vec<OriginForecast> = (0..count)
        .into_par_iter()
        .map(|k| {
            let params = &blocks[k / cfg.refit_lambda_every];
            forecast_with(spec, data, cfg, opts, params, lay.first_origin + k)
        })
        .collect::<Result<_>>()?;
    Ok(ForecastRun {
        model: spec.name(),
        config: *cfg,
        floor_count: forecasts.iter().filter(|f| f.floored).count(),
        records: forecasts.into_iter().map(|f| f.record).collect(),
        blocks,
    })
}

/// Writes records as `date,horizon,predicted,realized`.
pub fn write_forecasts_csv<W: Write>(w: W, records: &[ForecastRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "horizon", "predicted", "realized"])?;
    for r in records {
        wtr.write_record([
            r.target_date.to_string(),
            r.horizon.to_string(),
            fmt_f64(r.predicted),
            fmt_f64(r.realized),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_forecasts_csv<R: Read>(r: R) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// An input row whose date is not on the panel calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedRow {
    pub line: u64,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedForecasts {
    pub records: Vec<ForecastRecord>,
    pub unmatched: Vec<UnmatchedRow>,
}

#[derive(Debug, Deserialize)]
struct ExternalRow {
    date: NaiveDate,
    horizon: usize,
    predicted: f64,
}

/// Reads `date,horizon,predicted` rows (extra columns ignored) and attaches
/// the realized RV of each date from `data`.
pub fn import_external_forecasts<R: Read>(r: R, data: &ModelData) -> Result<ImportedForecasts> {
    let index: HashMap<NaiveDate, usize> = data
        .dates()
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i))
        .collect();
    let mut rdr = csv::Reader::from_reader(r);
    let mut records = Vec::new();
    let mut unmatched = Vec::new();
    for row in rdr.deserialize::<ExternalRow>() {
        let row = row?;
        match index.get(&row.date) {
            Some(&i) => records.push(ForecastRecord {
                target_date: row.date,
                horizon: row.horizon,
                predicted: row.predicted,
                realized: data.rv()[i],
            }),
            None => unmatched.push(UnmatchedRow {
                line: records.len() as u64 + unmatched.len() as u64 + 2,
                date: row.date,
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyJoin);
    }
    Ok(ImportedForecasts { records, unmatched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelFamily, ModelSpec};
    use chrono::Days;

    fn har_data(n: usize) -> ModelData {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let dates: Vec<_> = (0..n).map(|i| start + Days::new(i as u64)).collect();
        let mut rv = vec![0.0; n];
        for (t, v) in rv.iter_mut().enumerate().take(22) {
            *v = 1e-4 * (1.0 + 0.5 * ((t * 7 % 11) as f64 / 11.0));
        }
        for t in 22..n {
            let m5 = rv[t - 5..t].iter().sum::<f64>() / 5.0;
            let m22 = rv[t - 22..t].iter().sum::<f64>() / 22.0;
            rv[t] =
                2e-5 + 0.3 * rv[t - 1] + 0.3 * m5 + 0.2 * m22 + 1e-5 * ((t as f64) * 0.37).sin();
        }
        let closes = (0..n).map(|i| 100.0 + i as f64 * 0.01).collect();
        ModelData::new(dates, closes, rv).unwrap()
    }

    fn small_cfg(h: usize) -> ForecastConfig {
        ForecastConfig {
            window: 200,
            horizon: h,
            out_len: 40,
            ..Default::default()
        }
    }

    #[test]
    fn record_counts() {
        let data = har_data(400);
        let spec = ModelSpec::new(ModelFamily::HarRv);
        for h in [1, 5, 22] {
            let run =
                rolling_forecast(&spec, &data, &small_cfg(h), &FitOptions::default()).unwrap();
            assert_eq!(run.records.len(), 41 - h);
            assert_eq!(
                run.records.last().unwrap().target_date,
                *data.dates().last().unwrap()
            );
        }
    }

    #[test]
    fn insufficient_calendar_explains_length() {
        let data = har_data(250);
        let spec = ModelSpec::new(ModelFamily::HarRv);
        match rolling_forecast(&spec, &data, &small_cfg(1), &FitOptions::default()) {
            Err(Error::InsufficientData {
                required,
                available,
                ..
            }) => {
                assert_eq!(required, 21 + 1 + 200 + 40);
                assert_eq!(available, 250);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_origin_matches_run() {
        let data = har_data(300);
        let spec = ModelSpec::new(ModelFamily::HarRv);
        let cfg = small_cfg(5);
        let run = rolling_forecast(&spec, &data, &cfg, &FitOptions::default()).unwrap();
        for k in [0, 7, 35] {
            let one = forecast_origin(&spec, &data, &cfg, &FitOptions::default(), k).unwrap();
            assert_eq!(one.record, run.records[k]);
            assert_eq!(one.fit_rows, 200);
        }
    }

    #[test]
    fn csv_round_trip_and_import() {
        let data = har_data(300);
        let spec = ModelSpec::new(ModelFamily::HarRv);
        let run = rolling_forecast(&spec, &data, &small_cfg(1), &FitOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_forecasts_csv(&mut buf, &run.records).unwrap();
        assert_eq!(read_forecasts_csv(&buf[..]).unwrap(), run.records);
        let imported = import_external_forecasts(&buf[..], &data).unwrap();
        assert_eq!(imported.records, run.records);
        assert!(imported.unmatched.is_empty());

        let alien = "date,horizon,predicted\n1999-01-01,1,1e-4\n2010-01-05,1,2e-4\n";
        let imported = import_external_forecasts(alien.as_bytes(), &data).unwrap();
        assert_eq!(imported.records.len(), 1);
        assert_eq!(imported.unmatched[0].line, 2);
        let none = "date,horizon,predicted\n1999-01-01,1,1e-4\n";
        assert!(matches!(
            import_external_forecasts(none.as_bytes(), &data),
            Err(Error::EmptyJoin)
        ));
    }
}
