//! Table writers and the per-directory run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use volpath::fmt_f64;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(usize),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
        }
    }

    fn text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) if *x == 0.0 => "0".into(),
            Cell::Num(x) if x.is_finite() && (1e-3..1e6).contains(&x.abs()) => format!("{x:.6}"),
            Cell::Num(x) => format!("{x:.4e}"),
        }
    }

    fn numeric(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i)
    }
}

/// A table written both as CSV and as aligned text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf8"))
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::text).collect())
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|j| {
                cells
                    .iter()
                    .map(|r| r[j].chars().count())
                    .chain(std::iter::once(self.header[j].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, parts: Vec<String>| {
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(
            &mut out,
            self.header
                .iter()
                .zip(&widths)
                .map(|(h, w)| format!("{h:<w$}"))
                .collect(),
        );
        line(&mut out, widths.iter().map(|w| "-".repeat(*w)).collect());
        for (row, raw) in cells.iter().zip(&self.rows) {
            line(
                &mut out,
                row.iter()
                    .zip(raw)
                    .zip(&widths)
                    .map(|((c, r), w)| {
                        if r.numeric() {
                            format!("{c:>w$}")
                        } else {
                            format!("{c:<w$}")
                        }
                    })
                    .collect(),
            );
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.txt` under `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), CliError> {
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn prepare_dir(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Config(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    Ok(dir.to_path_buf())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fixed conventions recorded in every manifest next to the config knobs.
fn conventions() -> serde_json::Value {
    json!({
        "float_format": "17 significant digits, scientific",
        "har_alignment": "regressors at origin o, target at o + h",
        "m4_mean": "expanding mean of R1 up to the row",
        "kernel_refit": "decays and LASSO penalty refit at the first origin of each block",
        "lasso_cv_folds": "contiguous, earlier folds one row longer",
        "lasso_at_bound": "penalty >= max |x_j'(y - ybar)| returns zero slopes",
        "mcs_bootstrap": "moving block, no wrap, one index draw per replication shared by all models",
        "mcs_pvalues": "monotonized along the elimination order",
        "mcs_elimination": "largest standardized adverse mean differential, lowest index on ties",
        "mspe_pvalue": "one-sided upper normal tail",
        "forecast_floor": "forecasts below the floor are raised to it and counted",
    })
}

/// Writes `run.json`: tool version, command, effective config with its hash,
/// fixed conventions and input digests. No paths, clocks or thread counts.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    inputs: &[(String, String)],
) -> Result<(), CliError> {
    let config_json = serde_json::to_value(config)?;
    let hash = sha256_hex(serde_json::to_string(&config_json)?.as_bytes());
    let inputs: Vec<_> = inputs
        .iter()
        .map(|(n, h)| json!({ "name": n, "sha256": h }))
        .collect();
    let manifest = json!({
        "tool": "volpath",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_hash": hash,
        "config": config_json,
        "conventions": conventions(),
        "inputs": inputs,
    });
    write_json(&dir.join("run.json"), &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv_layouts() {
        let mut t = Table::new(["model", "value", "n"]);
        t.push(vec!["A".into(), 0.5.into(), 3usize.into()]);
        t.push(vec!["LONGER".into(), 1e-9.into(), 10usize.into()]);
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "model,value,n");
        assert!(csv.contains("A,5.0000000000000000e-1,3"));
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("LONGER"));
        assert!(lines[2].contains("0.500000"));
    }

    #[test]
    fn manifest_hash_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        write_manifest(dir.path(), "fit", &cfg, &[]).unwrap();
        let a = fs::read(dir.path().join("run.json")).unwrap();
        write_manifest(dir.path(), "fit", &cfg, &[]).unwrap();
        assert_eq!(a, fs::read(dir.path().join("run.json")).unwrap());
    }
}
