//! Subcommand bodies. Each reads its inputs, writes its tables and a
//! `run.json` manifest into the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::json;
use volpath::estimators::{
    compute_panel, describe, ljung_box, read_components_csv, write_components_csv, DailyComponents,
};
use volpath::evaluate::{loss_matrix, mcs, oos_r2, McsConfig};
use volpath::forecast::{
    import_external_forecasts, read_forecasts_csv, rolling_forecast, write_forecasts_csv,
    ForecastRecord,
};
use volpath::ingest::{build_panel, parse_bars, write_drop_report, ColumnMap};
use volpath::models::{fit_model, residual_acf, ModelData, ModelSpec};
use volpath::synth::{simulate_jump_diffusion, simulate_pdv_panel, write_truth_csv};
use volpath::{fmt_f64, Error};

use crate::config::{parse_models, RunConfig, SimKind};
use crate::error::CliError;
use crate::output::{prepare_dir, sha256_hex, write_json, write_manifest, Cell, Table};

fn create(path: PathBuf) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let out = prepare_dir(out)?;
    let s = &cfg.simulate;
    let mut summary = Table::new(["quantity", "value"]);
    match s.kind {
        SimKind::JumpDiffusion => {
            let (panel, truth) = simulate_jump_diffusion(&s.jump_diffusion(cfg.seed))?;
            panel.write_bars_csv(create(out.join("bars.csv"))?)?;
            write_truth_csv(create(out.join("truth.csv"))?, &truth)?;
            summary.push(vec!["days".into(), panel.len().into()]);
            summary.push(vec!["jumps".into(), truth.jumps.len().into()]);
            let mean_iv = truth.iv.iter().sum::<f64>() / truth.iv.len() as f64;
            summary.push(vec!["mean_iv".into(), mean_iv.into()]);
        }
        SimKind::Pdv => {
            let sim = simulate_pdv_panel(&s.pdv(cfg.seed, cfg.fit.convention))?;
            let mut w = csv::Writer::from_writer(create(out.join("daily.csv"))?);
            w.write_record(["date", "close", "rv", "r1", "r2"])?;
            for i in 0..sim.dates.len() {
                w.write_record([
                    sim.dates[i].to_string(),
                    fmt_f64(sim.closes[i]),
                    fmt_f64(sim.rv[i]),
                    fmt_f64(sim.r1[i]),
                    fmt_f64(sim.r2[i]),
                ])?;
            }
            w.flush()?;
            summary.push(vec!["days".into(), sim.dates.len().into()]);
            let mean_rv = sim.rv.iter().sum::<f64>() / sim.rv.len() as f64;
            summary.push(vec!["mean_rv".into(), mean_rv.into()]);
        }
    }
    summary.save(&out, "simulation")?;
    write_manifest(&out, "simulate", cfg, &[])
}

const DESCRIBED: [(&str, fn(&DailyComponents) -> f64); 14] = [
    ("RV", |c| c.rv),
    ("RBV", |c| c.rbv),
    ("CJ", |c| c.cj),
    ("CV", |c| c.cv),
    ("RS+", |c| c.rs_pos),
    ("RS-", |c| c.rs_neg),
    ("REX-", |c| c.rex_neg),
    ("REX+", |c| c.rex_pos),
    ("REXm", |c| c.rex_mod),
    ("REQ-", |c| c.req_neg),
    ("REQ+", |c| c.req_pos),
    ("REQm", |c| c.req_mod),
    ("Z", |c| c.z),
    ("RTQ", |c| c.rtq),
];

fn describe_table(rows: &[DailyComponents]) -> Result<Table, CliError> {
    const LB_LAGS: usize = 10;
    let mut t = Table::new([
        "series", "n", "mean", "std", "skewness", "kurtosis", "max", "min", "lb10", "lb10_p",
    ]);
    for (name, get) in DESCRIBED {
        let series: Vec<f64> = rows.iter().map(get).collect();
        let d = describe(&series)?;
        let (q, p) = match ljung_box(&series, LB_LAGS) {
            Ok(lb) => (lb.statistic, lb.p_value),
            Err(_) => (f64::NAN, f64::NAN),
        };
        t.push(vec![
            name.into(),
            d.n.into(),
            d.mean.into(),
            d.std.into(),
            d.skewness.into(),
            d.kurtosis.into(),
            d.max.into(),
            d.min.into(),
            q.into(),
            p.into(),
        ]);
    }
    Ok(t)
}

pub fn estimate(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let bytes = read_input(input)?;
    let out = prepare_dir(out)?;
    let e = &cfg.estimate;
    let columns = ColumnMap {
        timestamp: e.timestamp_column.clone(),
        price: e.price_column.clone(),
    };
    let parsed = parse_bars(bytes.as_slice(), &columns)?;
    write_drop_report(create(out.join("dropped_rows.jsonl"))?, &parsed.dropped)?;
    let built = build_panel(&parsed.records, e.min_obs)?;
    let mut dropped = Table::new(["date", "n_returns"]);
    for d in &built.dropped_days {
        dropped.push(vec![d.date.to_string().into(), d.n_returns.into()]);
    }
    dropped.save(&out, "dropped_days")?;

    let rows = compute_panel(&built.panel, &e.components())?;
    write_components_csv(create(out.join("components.csv"))?, &rows)?;
    let mut w = csv::Writer::from_writer(create(out.join("closes.csv"))?);
    w.write_record(["date", "close"])?;
    for day in built.panel.days() {
        w.write_record([day.date().to_string(), fmt_f64(day.close())])?;
    }
    w.flush()?;
    describe_table(&rows)?.save(&out, "describe")?;
    write_manifest(
        &out,
        "estimate",
        cfg,
        &[(file_name(input), sha256_hex(&bytes))],
    )
}

#[derive(Deserialize)]
struct CloseRow {
    date: NaiveDate,
    close: f64,
}

#[derive(Deserialize)]
struct DailyRow {
    date: NaiveDate,
    close: f64,
    rv: f64,
}

/// Loads `components.csv` + `closes.csv` (estimate output) or `daily.csv`
/// (RV-only data, e.g. the path-dependent simulator). Returns the data and
/// the digests of the files read.
pub fn load_data(dir: &Path) -> Result<(ModelData, Vec<(String, String)>), CliError> {
    let components = dir.join("components.csv");
    if components.is_file() {
        let comp_bytes = read_input(&components)?;
        let close_path = dir.join("closes.csv");
        let close_bytes = read_input(&close_path)?;
        let rows = read_components_csv(comp_bytes.as_slice())?;
        let closes: Vec<CloseRow> = csv::Reader::from_reader(close_bytes.as_slice())
            .deserialize()
            .collect::<Result<_, _>>()?;
        if closes.len() != rows.len() || closes.iter().zip(&rows).any(|(c, r)| c.date != r.date) {
            return Err(CliError::Runtime(
                "closes.csv and components.csv cover different dates".into(),
            ));
        }
        let data = ModelData::from_components(&rows, closes.iter().map(|c| c.close).collect())?;
        let digests = vec![
            ("components.csv".to_string(), sha256_hex(&comp_bytes)),
            ("closes.csv".to_string(), sha256_hex(&close_bytes)),
        ];
        return Ok((data, digests));
    }
    let daily = dir.join("daily.csv");
    if daily.is_file() {
        let bytes = read_input(&daily)?;
        let rows: Vec<DailyRow> = csv::Reader::from_reader(bytes.as_slice())
            .deserialize()
            .collect::<Result<_, _>>()?;
        let data = ModelData::new(
            rows.iter().map(|r| r.date).collect(),
            rows.iter().map(|r| r.close).collect(),
            rows.iter().map(|r| r.rv).collect(),
        )?;
        return Ok((data, vec![("daily.csv".to_string(), sha256_hex(&bytes))]));
    }
    Err(CliError::Config(format!(
        "{} has neither components.csv nor daily.csv",
        dir.display()
    )))
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

pub fn fit(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let specs = parse_models(&cfg.fit.models, cfg.fit.convention)?;
    let (data, digests) = load_data(input)?;
    let out = prepare_dir(out)?;
    let opts = cfg.fit.options();
    let mut summary = Table::new([
        "model",
        "n_obs",
        "k",
        "sse",
        "adj_r2",
        "aic",
        "bic",
        "lambdas",
        "boundary",
        "sign_violations",
    ]);
    let mut coefs = Table::new(["model", "name", "estimate", "se", "joint_se"]);
    for spec in &specs {
        let name = spec.name();
        let fit =
            fit_model(spec, &data, &opts).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
        write_json(&out.join(format!("fit_{name}.json")), &fit)?;
        summary.push(vec![
            name.clone().into(),
            fit.n_obs.into(),
            fit.coefficients.len().into(),
            fit.sse.into(),
            fit.adj_r2.into(),
            fit.aic.into(),
            fit.bic.into(),
            fit.lambdas_hat
                .as_deref()
                .map(join_f64)
                .unwrap_or_default()
                .into(),
            fit.boundary
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(";")
                .into(),
            fit.sign_violations.len().into(),
        ]);
        for (j, c) in fit.coefficients.iter().enumerate() {
            let joint = fit.joint_se.as_ref().map(|s| s[j]).unwrap_or(f64::NAN);
            coefs.push(vec![
                name.clone().into(),
                c.name.clone().into(),
                c.estimate.into(),
                c.se.unwrap_or(f64::NAN).into(),
                joint.into(),
            ]);
        }
        let lags = cfg.fit.acf_lags;
        if lags > 0 && fit.residuals.len() > lags {
            let acf = residual_acf(&fit.residuals, lags)?;
            let mut t = Table::new(["lag", "rho", "band"]);
            for (l, r) in acf.rho.iter().enumerate() {
                t.push(vec![(l + 1).into(), (*r).into(), acf.band.into()]);
            }
            fs::write(out.join(format!("acf_{name}.csv")), t.to_csv()?)?;
        }
    }
    summary.save(&out, "fit_summary")?;
    coefs.save(&out, "coefficients")?;
    write_manifest(&out, "fit", cfg, &digests)
}

pub fn forecast(
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    imports: &[(String, PathBuf)],
) -> Result<(), CliError> {
    let names = cfg.forecast.models.as_ref().unwrap_or(&cfg.fit.models);
    let specs = parse_models(names, cfg.fit.convention)?;
    let (data, mut digests) = load_data(input)?;
    let import_bytes = imports
        .iter()
        .map(|(name, path)| read_input(path).map(|b| (name.clone(), b)))
        .collect::<Result<Vec<_>, _>>()?;
    let out = prepare_dir(out)?;
    let opts = cfg.fit.options();
    let mut summary = Table::new([
        "model",
        "horizon",
        "records",
        "floored",
        "first_date",
        "last_date",
    ]);
    let mut row = |name: &str, h: usize, recs: &[ForecastRecord], floored: usize| {
        summary.push(vec![
            name.into(),
            h.into(),
            recs.len().into(),
            floored.into(),
            recs.first()
                .map(|r| r.target_date.to_string())
                .unwrap_or_default()
                .into(),
            recs.last()
                .map(|r| r.target_date.to_string())
                .unwrap_or_default()
                .into(),
        ]);
    };
    for spec in &specs {
        let name = spec.name();
        for &h in &cfg.forecast.horizons {
            let run = rolling_forecast(spec, &data, &cfg.forecast.config(h), &opts)
                .map_err(|e| CliError::Runtime(format!("{name} h={h}: {e}")))?;
            write_forecasts_csv(
                create(out.join(format!("forecast_{name}_h{h}.csv")))?,
                &run.records,
            )?;
            write_json(&out.join(format!("blocks_{name}_h{h}.json")), &run.blocks)?;
            row(&name, h, &run.records, run.floor_count);
        }
    }
    for (name, bytes) in &import_bytes {
        if specs.iter().any(|s| s.name() == *name) {
            return Err(CliError::Config(format!(
                "imported forecasts reuse the model name {name}"
            )));
        }
        let imported = import_external_forecasts(bytes.as_slice(), &data)?;
        let mut by_h: BTreeMap<usize, Vec<ForecastRecord>> = BTreeMap::new();
        for r in imported.records {
            by_h.entry(r.horizon).or_default().push(r);
        }
        for (h, mut recs) in by_h {
            recs.sort_by_key(|r| r.target_date);
            write_forecasts_csv(
                create(out.join(format!("forecast_{name}_h{h}.csv")))?,
                &recs,
            )?;
            row(name, h, &recs, 0);
        }
        if !imported.unmatched.is_empty() {
            write_json(
                &out.join(format!("unmatched_{name}.json")),
                &imported.unmatched,
            )?;
        }
        digests.push((format!("import:{name}"), sha256_hex(bytes)));
    }
    summary.save(&out, "forecast_summary")?;
    write_manifest(&out, "forecast", cfg, &digests)
}

/// `forecast_<model>_h<h>.csv` → (model, h).
fn parse_forecast_name(file: &str) -> Option<(String, usize)> {
    let stem = file.strip_prefix("forecast_")?.strip_suffix(".csv")?;
    let (model, h) = stem.rsplit_once("_h")?;
    Some((model.to_string(), h.parse().ok()?))
}

type Runs = Vec<(String, Vec<ForecastRecord>)>;

pub fn evaluate(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let entries = fs::read_dir(input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let mut files: BTreeMap<(usize, String), PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        if let Some((model, h)) = parse_forecast_name(&file_name(&path)) {
            files.insert((h, model), path);
        }
    }
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no forecast_<model>_h<h>.csv files in {}",
            input.display()
        )));
    }
    let mut by_h: BTreeMap<usize, Runs> = BTreeMap::new();
    let mut digests = Vec::new();
    for ((h, model), path) in &files {
        let bytes = read_input(path)?;
        digests.push((file_name(path), sha256_hex(&bytes)));
        by_h.entry(*h)
            .or_default()
            .push((model.clone(), read_forecasts_csv(bytes.as_slice())?));
    }
    let ev = &cfg.evaluate;
    // Catalog names are canonicalized (HAR_RV → HAR-RV); imported names are kept.
    let benchmark = ev
        .benchmark
        .parse::<ModelSpec>()
        .map(|s| s.name())
        .unwrap_or_else(|_| ev.benchmark.clone());
    if let Some((h, _)) = by_h
        .iter()
        .find(|(_, runs)| !runs.iter().any(|(m, _)| *m == benchmark))
    {
        return Err(CliError::Config(format!(
            "benchmark {} has no forecasts at horizon {h}",
            ev.benchmark
        )));
    }
    let out = prepare_dir(out)?;
    for (h, runs) in &by_h {
        let matrix = loss_matrix(runs).map_err(|e| match e {
            Error::Evaluation { reason, dates } => {
                let shown: Vec<String> = dates.iter().take(10).map(|d| d.to_string()).collect();
                CliError::Runtime(format!("h={h}: {reason}; dates {}", shown.join(", ")))
            }
            other => other.into(),
        })?;
        let mut loss_table = Table::new(
            std::iter::once("model".to_string()).chain(ev.losses.iter().map(|k| k.to_string())),
        );
        for (i, model) in matrix.models.iter().enumerate() {
            let mut row: Vec<Cell> = vec![model.clone().into()];
            row.extend(ev.losses.iter().map(|k| Cell::Num(matrix.mean(*k, i))));
            loss_table.push(row);
        }
        loss_table.save(&out, &format!("losses_h{h}"))?;

        let mut header = vec!["model".to_string()];
        let mut pvals: Vec<Vec<Cell>> = matrix
            .models
            .iter()
            .map(|m| vec![m.clone().into()])
            .collect();
        let mut survivors = Table::new(["loss", "statistic", "alpha", "survivors"]);
        let mut detail = Vec::new();
        for kind in &ev.losses {
            for statistic in &ev.statistics {
                let mcfg = McsConfig {
                    statistic: *statistic,
                    reps: ev.reps,
                    block_len: ev.block_len,
                    seed: cfg.seed,
                };
                let r = mcs(&matrix.models, matrix.series(*kind), &mcfg)?;
                header.push(format!("{kind}_{}", statistic.name()));
                for (row, p) in pvals.iter_mut().zip(&r.p_values) {
                    row.push(Cell::Num(*p));
                }
                for alpha in &ev.levels {
                    survivors.push(vec![
                        kind.to_string().into(),
                        statistic.name().into(),
                        (*alpha).into(),
                        r.survivors(*alpha).join(";").into(),
                    ]);
                }
                detail.push(json!({ "loss": kind, "result": r }));
            }
        }
        let mut pt = Table::new(header);
        for row in pvals {
            pt.push(row);
        }
        pt.save(&out, &format!("mcs_pvalues_h{h}"))?;
        survivors.save(&out, &format!("mcs_survivors_h{h}"))?;
        write_json(&out.join(format!("mcs_h{h}.json")), &detail)?;

        let oos = oos_r2(runs, &benchmark)?;
        let mut t = Table::new(["model", "r2_oos_pct", "mspe_adj_stat", "p_value"]);
        for row in &oos.rows {
            t.push(vec![
                row.model.clone().into(),
                row.r2_oos.into(),
                row.statistic.into(),
                row.p_value.into(),
            ]);
        }
        t.save(&out, &format!("oos_r2_h{h}"))?;
    }
    write_manifest(&out, "evaluate", cfg, &digests)
}

/// Prints every text table in `dir`, preceded by the manifest summary.
pub fn report(dir: &Path) -> Result<String, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut tables: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    tables.sort();
    if tables.is_empty() {
        return Err(CliError::Config(format!("no tables in {}", dir.display())));
    }
    let mut out = String::new();
    if let Ok(text) = fs::read_to_string(dir.join("run.json")) {
        let m: serde_json::Value = serde_json::from_str(&text)?;
        out.push_str(&format!(
            "volpath {} {} (config {})\n\n",
            m["version"].as_str().unwrap_or("?"),
            m["command"].as_str().unwrap_or("?"),
            m["config_hash"].as_str().unwrap_or("?"),
        ));
    }
    for path in tables {
        out.push_str(&format!(
            "== {} ==\n",
            file_name(&path).trim_end_matches(".txt")
        ));
        out.push_str(&fs::read_to_string(&path)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forecast_file_names() {
        assert_eq!(
            parse_forecast_name("forecast_HAR-PD-RV_h22.csv"),
            Some(("HAR-PD-RV".into(), 22))
        );
        assert_eq!(
            parse_forecast_name("forecast_my_model_h1.csv"),
            Some(("my_model".into(), 1))
        );
        assert_eq!(parse_forecast_name("blocks_HAR-RV_h1.json"), None);
        assert_eq!(parse_forecast_name("forecast_x_hz.csv"), None);
    }
}
