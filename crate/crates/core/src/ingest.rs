//! Intraday bar ingestion: CSV parsing, grouping by calendar date and
//! conversion to per-day log returns.
//!
//! Overnight (close-to-open) returns are never formed; each [`TradingDay`]
//! only contains returns between consecutive bars of the same date.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of intraday returns a day must carry to be kept.
pub const DEFAULT_MIN_OBS: usize = 10;

/// One intraday price observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarRecord {
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

/// Column names used to locate timestamp and price in the input CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub price: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".to_string(),
            price: "price".to_string(),
        }
    }
}

/// A row rejected during parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    /// 1-based line number in the source (header is line 1).
    pub line: u64,
    pub reason: String,
}

/// Output of [`parse_bars`]: the accepted records, sorted by time, plus
/// everything that was rejected.
#[derive(Debug, Clone, Default)]
pub struct ParsedBars {
    pub records: Vec<BarRecord>,
    pub dropped: Vec<DropReport>,
}

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO-8601 or `YYYY-MM-DD HH:MM:SS` timestamp. Offsets are
/// accepted and discarded (the wall-clock time is kept).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in TIMESTAMP_FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(ts);
        }
    }
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.naive_local())
}

/// Reads bar records from CSV text with a header row.
///
/// Rows whose price is non-numeric, non-finite or not strictly positive,
/// rows with an unparseable timestamp, and repeated timestamps are dropped
/// and reported. The surviving records are sorted by timestamp.
pub fn parse_bars<R: Read>(source: R, columns: &ColumnMap) -> Result<ParsedBars> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyInput("no header row".into()));
    }
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Format(format!(
                "column `{name}` not found in header [{}]",
                headers.iter().collect::<Vec<_>>().join(",")
            ))
        })
    };
    let ts_col = find(&columns.timestamp)?;
    let px_col = find(&columns.price)?;

    let mut out = ParsedBars::default();
    let mut rows = 0usize;
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.dropped.push(DropReport {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        rows += 1;
        let Some(timestamp) = row.get(ts_col).and_then(parse_timestamp) else {
            out.dropped.push(DropReport {
                line,
                reason: format!("unparseable timestamp {:?}", row.get(ts_col).unwrap_or("")),
            });
            continue;
        };
        let raw_price = row.get(px_col).unwrap_or("");
        match raw_price.parse::<f64>() {
            Ok(price) if price.is_finite() && price > 0.0 => {
                out.records.push(BarRecord { timestamp, price })
            }
            Ok(price) => out.dropped.push(DropReport {
                line,
                reason: format!("non-positive or non-finite price {price}"),
            }),
            Err(_) => out.dropped.push(DropReport {
                line,
                reason: format!("non-numeric price {raw_price:?}"),
            }),
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput("no data rows".into()));
    }

    // Stable sort keeps the first occurrence of a repeated timestamp first.
    let mut indexed: Vec<(usize, BarRecord)> = out.records.drain(..).enumerate().collect();
    indexed.sort_by(|a, b| a.1.timestamp.cmp(&b.1.timestamp).then(a.0.cmp(&b.0)));
    let mut last: Option<NaiveDateTime> = None;
    for (_, rec) in indexed {
        if last == Some(rec.timestamp) {
            out.dropped.push(DropReport {
                line: 0,
                reason: format!("duplicate timestamp {}", rec.timestamp),
            });
            continue;
        }
        last = Some(rec.timestamp);
        out.records.push(rec);
    }
    Ok(out)
}

/// Writes drop reports as line-delimited JSON.
pub fn write_drop_report<W: Write>(mut w: W, drops: &[DropReport]) -> Result<()> {
    for d in drops {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One trading day: its bars and the intraday log returns between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingDay {
    date: NaiveDate,
    times: Vec<NaiveTime>,
    prices: Vec<f64>,
    returns: Vec<f64>,
}

impl TradingDay {
    /// Builds a day from its bar times and prices. Needs at least two bars.
    pub fn from_prices(date: NaiveDate, times: Vec<NaiveTime>, prices: Vec<f64>) -> Result<Self> {
        if times.len() != prices.len() {
            return Err(Error::InvalidParameter(format!(
                "{} times but {} prices on {date}",
                times.len(),
                prices.len()
            )));
        }
        if prices.len() < 2 {
            return Err(Error::InsufficientData {
                what: format!("returns on {date}"),
                required: 2,
                available: prices.len(),
            });
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidParameter(format!("price {p} on {date}")));
        }
        let returns = prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
        Ok(Self {
            date,
            times,
            prices,
            returns,
        })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    /// Number of intraday returns.
    pub fn n(&self) -> usize {
        self.returns.len()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn times(&self) -> &[NaiveTime] {
        &self.times
    }

    pub fn open(&self) -> f64 {
        self.prices[0]
    }

    pub fn close(&self) -> f64 {
        self.prices[self.prices.len() - 1]
    }

    pub fn bars(&self) -> impl Iterator<Item = BarRecord> + '_ {
        self.times.iter().zip(&self.prices).map(|(t, p)| BarRecord {
            timestamp: self.date.and_time(*t),
            price: *p,
        })
    }
}

/// Date-ordered collection of trading days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    days: Vec<TradingDay>,
}

impl Panel {
    /// Wraps days, checking the dates are strictly increasing.
    pub fn new(days: Vec<TradingDay>) -> Result<Self> {
        if let Some(w) = days.windows(2).find(|w| w[0].date >= w[1].date) {
            return Err(Error::InvalidParameter(format!(
                "panel dates not strictly increasing at {} -> {}",
                w[0].date, w[1].date
            )));
        }
        Ok(Self { days })
    }

    pub fn days(&self) -> &[TradingDay] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// Last bar price of every day.
    pub fn closes(&self) -> Vec<f64> {
        self.days.iter().map(TradingDay::close).collect()
    }

    /// The bar stream the panel was built from.
    pub fn to_bars(&self) -> Vec<BarRecord> {
        self.days.iter().flat_map(|d| d.bars()).collect()
    }

    /// Writes the bar stream in the ingest CSV format (`timestamp,price`).
    pub fn write_bars_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["timestamp", "price"])?;
        for bar in self.to_bars() {
            wtr.write_record([
                bar.timestamp.format("%Y-%m-%d %H:%M:%S%.f").to_string(),
                format!("{:.16e}", bar.price),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A day removed by [`build_panel`] for having too few returns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayDrop {
    pub date: NaiveDate,
    pub n_returns: usize,
}

#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: Panel,
    pub dropped_days: Vec<DayDrop>,
}

/// Groups time-sorted bars by calendar date and keeps the days with at
/// least `min_obs` returns.
pub fn build_panel(bars: &[BarRecord], min_obs: usize) -> Result<PanelBuild> {
    if min_obs < 2 {
        return Err(Error::InvalidParameter(format!(
            "min_obs must be >= 2, got {min_obs}"
        )));
    }
    if let Some(w) = bars.windows(2).find(|w| w[0].timestamp >= w[1].timestamp) {
        return Err(Error::InvalidParameter(format!(
            "bars not strictly increasing in time at {}",
            w[1].timestamp
        )));
    }

    let mut days = Vec::new();
    let mut dropped_days = Vec::new();
    for chunk in bars.chunk_by(|a, b| a.timestamp.date() == b.timestamp.date()) {
        let date = chunk[0].timestamp.date();
        let n_returns = chunk.len().saturating_sub(1);
        if n_returns < min_obs {
            dropped_days.push(DayDrop { date, n_returns });
            continue;
        }
        let times = chunk.iter().map(|b| b.timestamp.time()).collect();
        let prices = chunk.iter().map(|b| b.price).collect();
        days.push(TradingDay::from_prices(date, times, prices)?);
    }
    if days.is_empty() {
        return Err(Error::EmptyPanel { min_obs });
    }
    Ok(PanelBuild {
        panel: Panel::new(days)?,
        dropped_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn parses_two_rows_in_order() {
        let csv = "timestamp,price\n2024-01-02 09:30:00,100.0\n2024-01-02 09:35:00,101.0\n";
        let parsed = parse_bars(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(
            parsed.records,
            vec![
                BarRecord {
                    timestamp: ts("2024-01-02 09:30:00"),
                    price: 100.0
                },
                BarRecord {
                    timestamp: ts("2024-01-02 09:35:00"),
                    price: 101.0
                },
            ]
        );
        assert!(parsed.dropped.is_empty());
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let csv = "timestamp,price\n2024-01-02T09:35:00,101\n2024-01-02T09:30:00,100\n";
        let parsed = parse_bars(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(parsed.records[0].price, 100.0);
        assert_eq!(parsed.records[1].price, 101.0);
    }

    #[test]
    fn drops_negative_and_garbage_prices() {
        let csv = "timestamp,price\n2024-01-02 09:30:00,-1\n2024-01-02 09:35:00,101\n2024-01-02 09:40:00,abc\n";
        let parsed = parse_bars(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.dropped.len(), 2);
        assert_eq!(parsed.dropped[0].line, 2);
        assert_eq!(parsed.dropped[1].line, 4);
    }

    #[test]
    fn custom_columns_and_missing_header() {
        let csv = "when,close,vol\n2024-01-02 09:30:00,100,5\n";
        let cols = ColumnMap {
            timestamp: "when".into(),
            price: "close".into(),
        };
        assert_eq!(parse_bars(csv.as_bytes(), &cols).unwrap().records.len(), 1);
        let err = parse_bars(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            parse_bars("".as_bytes(), &ColumnMap::default()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_bars("timestamp,price\n".as_bytes(), &ColumnMap::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn duplicate_timestamps_keep_first() {
        let csv = "timestamp,price\n2024-01-02 09:30:00,100\n2024-01-02 09:30:00,200\n";
        let parsed = parse_bars(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].price, 100.0);
        assert_eq!(parsed.dropped.len(), 1);
    }

    #[test]
    fn rfc3339_offsets_keep_wall_clock() {
        assert_eq!(ts("2024-01-02T09:30:00+08:00"), ts("2024-01-02 09:30:00"));
    }

    fn five_minute_day(date: &str, n_bars: usize, price: impl Fn(usize) -> f64) -> Vec<BarRecord> {
        let start = ts(&format!("{date} 09:30:00"));
        (0..n_bars)
            .map(|i| BarRecord {
                timestamp: start + chrono::Duration::minutes(5 * i as i64),
                price: price(i),
            })
            .collect()
    }

    #[test]
    fn seventy_nine_bars_give_seventy_eight_returns() {
        let bars = five_minute_day("2024-01-02", 79, |i| 100.0 + i as f64);
        let built = build_panel(&bars, DEFAULT_MIN_OBS).unwrap();
        assert_eq!(built.panel.len(), 1);
        assert_eq!(built.panel.days()[0].n(), 78);
    }

    #[test]
    fn constant_price_day_has_zero_returns() {
        let bars = five_minute_day("2024-01-02", 20, |_| 50.0);
        let built = build_panel(&bars, 10).unwrap();
        assert!(built.panel.days()[0].returns().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn short_day_is_dropped_and_reported() {
        let mut bars = five_minute_day("2024-01-02", 1, |_| 50.0);
        bars.extend(five_minute_day("2024-01-03", 5, |i| 50.0 + i as f64));
        let built = build_panel(&bars, 2).unwrap();
        assert_eq!(built.panel.len(), 1);
        assert_eq!(
            built.dropped_days,
            vec![DayDrop {
                date: NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(),
                n_returns: 0
            }]
        );
        let only_short = five_minute_day("2024-01-02", 1, |_| 50.0);
        assert!(matches!(
            build_panel(&only_short, 2),
            Err(Error::EmptyPanel { .. })
        ));
    }

    #[test]
    fn no_overnight_return() {
        let mut bars = five_minute_day("2024-01-02", 3, |_| 100.0);
        bars.extend(five_minute_day("2024-01-03", 3, |_| 200.0));
        let built = build_panel(&bars, 2).unwrap();
        for day in built.panel.days() {
            assert!(day.returns().iter().all(|r| *r == 0.0));
        }
    }

    #[test]
    fn unsorted_bars_rejected() {
        let mut bars = five_minute_day("2024-01-02", 3, |_| 100.0);
        bars.swap(0, 2);
        assert!(build_panel(&bars, 2).is_err());
    }
}
