//! Price-file ingestion and log returns.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use volbreak::model::Series;

/// Column names to read from a price CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub date: String,
    pub price: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self { date: "date".into(), price: "price".into() }
    }
}

/// Dated positive price observations, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<String>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Load a `date,price` CSV (configurable column names). Every malformed row
/// is reported with its line number.
pub fn load_csv(path: &Path, cols: &ColumnSpec) -> Result<PriceSeries> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers().context("missing header row")?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h == cols.date)
        .with_context(|| format!("no column named {:?} in {}", cols.date, path.display()))?;
    let price_idx = headers
        .iter()
        .position(|h| h == cols.price)
        .with_context(|| format!("no column named {:?} in {}", cols.price, path.display()))?;

    let mut dates: Vec<String> = Vec::new();
    let mut prices = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.with_context(|| format!("line {line}: unreadable record"))?;
        let date_raw = record
            .get(date_idx)
            .with_context(|| format!("line {line}: missing date field"))?
            .trim();
        let date = chrono::NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .with_context(|| format!("line {line}: malformed date {date_raw:?}"))?;
        let date = date.format("%Y-%m-%d").to_string();
        let price_raw = record
            .get(price_idx)
            .with_context(|| format!("line {line}: missing price field"))?
            .trim();
        if price_raw.is_empty() {
            bail!("line {line}: missing price");
        }
        let price: f64 = price_raw
            .parse()
            .with_context(|| format!("line {line}: malformed price {price_raw:?}"))?;
        if !price.is_finite() || price <= 0.0 {
            bail!("line {line}: price must be positive, got {price}");
        }
        if let Some(prev) = dates.last() {
            if *prev == date {
                bail!("line {line}: duplicate date {date}");
            }
            if prev.as_str() > date.as_str() {
                bail!("line {line}: dates not increasing ({prev} then {date})");
            }
        }
        dates.push(date);
        prices.push(price);
    }
    if prices.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(PriceSeries { dates, prices })
}

/// Percent log returns `r_t = 100 * ln(S_t / S_{t-1})`; length is one less
/// than the price series.
pub fn log_returns(prices: &PriceSeries) -> Result<Series> {
    if prices.len() < 2 {
        bail!("need at least 2 prices to form returns, got {}", prices.len());
    }
    let values: Vec<f64> = prices
        .prices
        .windows(2)
        .map(|w| 100.0 * (w[1].ln() - w[0].ln()))
        .collect();
    Ok(Series::new(values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_a_small_valid_file() {
        let f = write_csv("date,price\n2020-01-01,100.0\n2020-01-02,110.0\n");
        let p = load_csv(f.path(), &ColumnSpec::default()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.dates[0], "2020-01-01");
        let r = log_returns(&p).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.values()[0] - 100.0 * (1.1f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_price_with_line_number() {
        let f = write_csv("date,price\n2020-01-01,100.0\n2020-01-02,-1.0\n");
        let err = load_csv(f.path(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_malformed_and_duplicate_dates() {
        let f = write_csv("date,price\n2020-01-01,1.0\nnot-a-date,2.0\n");
        let err = load_csv(f.path(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let f = write_csv("date,price\n2020-01-01,1.0\n2020-01-01,2.0\n");
        let err = load_csv(f.path(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let f = write_csv("date,price\n2020-01-02,1.0\n2020-01-01,2.0\n");
        let err = load_csv(f.path(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("not increasing"), "{err}");
    }

    #[test]
    fn rejects_missing_price() {
        let f = write_csv("date,price\n2020-01-01,1.0\n2020-01-02,\n");
        let err = load_csv(f.path(), &ColumnSpec::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn custom_column_names() {
        let f = write_csv("Date,Close,Volume\n2020-01-01,5.0,1\n2020-01-02,6.0,2\n");
        let cols = ColumnSpec { date: "Date".into(), price: "Close".into() };
        let p = load_csv(f.path(), &cols).unwrap();
        assert_eq!(p.len(), 2);
        assert!(load_csv(f.path(), &ColumnSpec::default()).is_err());
    }

    #[test]
    fn zero_return_for_flat_prices() {
        let p = PriceSeries {
            dates: vec!["2020-01-01".into(), "2020-01-02".into()],
            prices: vec![100.0, 100.0],
        };
        let r = log_returns(&p).unwrap();
        assert_eq!(r.values(), &[0.0]);
    }
}
