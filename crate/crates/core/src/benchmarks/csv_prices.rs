use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Close prices on a complete date × ticker grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    /// Sorted ascending.
    pub dates: Vec<String>,
    /// Sorted ascending.
    pub tickers: Vec<String>,
    /// `dates.len() × tickers.len()`.
    pub closes: DMatrix<f64>,
}

#[derive(Deserialize)]
struct Row {
    date: String,
    ticker: String,
    close: f64,
}

/// Reads a `date,ticker,close` CSV. Every ticker must have a positive close
/// on every date; dates sort lexicographically (use ISO-8601).
pub fn load_price_table(path: &Path) -> Result<PriceTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    for col in ["date", "ticker", "close"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::CsvSchema(format!("missing column `{col}`")));
        }
    }
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut dates = BTreeSet::new();
    let mut tickers = BTreeSet::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row?;
        if !(row.close > 0.0 && row.close.is_finite()) {
            return Err(Error::CsvSchema(format!("record {}: close must be positive, got {}", line + 1, row.close)));
        }
        dates.insert(row.date.clone());
        tickers.insert(row.ticker.clone());
        if cells.insert((row.date.clone(), row.ticker.clone()), row.close).is_some() {
            return Err(Error::CsvSchema(format!("duplicate entry for {} on {}", row.ticker, row.date)));
        }
    }
    let dates: Vec<String> = dates.into_iter().collect();
    let tickers: Vec<String> = tickers.into_iter().collect();
    if dates.len() < 2 || tickers.is_empty() {
        return Err(Error::CsvSchema("need at least two dates and one ticker".into()));
    }
    let mut closes = DMatrix::zeros(dates.len(), tickers.len());
    for (i, d) in dates.iter().enumerate() {
        for (j, t) in tickers.iter().enumerate() {
            closes[(i, j)] = *cells
                .get(&(d.clone(), t.clone()))
                .ok_or_else(|| Error::CsvSchema(format!("no close for {t} on {d}")))?;
        }
    }
    Ok(PriceTable { dates, tickers, closes })
}
