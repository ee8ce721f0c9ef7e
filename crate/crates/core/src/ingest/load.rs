use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::panel::ReturnPanel;
use crate::corrmodel::DATE_FORMAT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Asset,
    Factor,
}

/// Splits price columns into assets and factors, and names the factors each
/// asset is initially forced to carry.
///
/// ```json
/// {"columns": {"AAA": "asset", "MKT": "factor"}, "forced": {"AAA": ["MKT"]}}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub columns: BTreeMap<String, ColumnRole>,
    #[serde(default)]
    pub forced: BTreeMap<String, Vec<String>>,
}

impl Manifest {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (asset, factors) in &self.forced {
            if self.columns.get(asset) != Some(&ColumnRole::Asset) {
                return Err(Error::invalid(format!("forced entry '{asset}' is not an asset column")));
            }
            for f in factors {
                if self.columns.get(f) != Some(&ColumnRole::Factor) {
                    return Err(Error::invalid(format!(
                        "forced factor '{f}' of '{asset}' is not a factor column"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A price row left out of the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub date: NaiveDate,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub price_rows: usize,
    /// Rows dropped because a cell was empty or not a number.
    pub dropped_missing: usize,
    /// Rows dropped because a price was zero or negative.
    pub dropped_nonpositive: usize,
    pub rejected: Vec<RejectedRow>,
    pub ignored_columns: Vec<String>,
}

impl LoadReport {
    pub fn warning_count(&self) -> usize {
        self.dropped_missing + self.dropped_nonpositive
    }
}

enum Cell {
    Price(f64),
    Missing,
    NonPositive(f64),
}

fn parse_cell(s: &str) -> Cell {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Cell::Missing;
    }
    match s.parse::<f64>() {
        Ok(v) if !v.is_finite() => Cell::Missing,
        Ok(v) if v <= 0.0 => Cell::NonPositive(v),
        Ok(v) => Cell::Price(v),
        Err(_) => Cell::Missing,
    }
}

/// Reads a `date,<ticker>...` price CSV and converts it to log-returns.
///
/// Dates with any missing or non-positive price are dropped; returns are
/// `ln(P_t / P_s)` between consecutive retained dates. Columns absent from the
/// manifest are ignored; manifest columns absent from the file are an error.
pub fn load_prices<R: Read>(reader: R, manifest: &Manifest) -> Result<(ReturnPanel, LoadReport)> {
    manifest.validate()?;
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("date") {
        return Err(Error::Parse("price file must start with a 'date' column".into()));
    }
    let mut report = LoadReport::default();
    let mut asset_cols = Vec::new();
    let mut factor_cols = Vec::new();
    for (idx, name) in header.iter().enumerate().skip(1) {
        match manifest.columns.get(name) {
            Some(ColumnRole::Asset) => asset_cols.push((idx, name.to_string())),
            Some(ColumnRole::Factor) => factor_cols.push((idx, name.to_string())),
            None => report.ignored_columns.push(name.to_string()),
        }
    }
    let present: Vec<&str> = header.iter().collect();
    let missing: Vec<&String> = manifest
        .columns
        .keys()
        .filter(|k| !present.contains(&k.as_str()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Parse(format!(
            "manifest columns missing from price file: {missing:?}"
        )));
    }
    if asset_cols.is_empty() || factor_cols.is_empty() {
        return Err(Error::invalid(
            "price file needs at least one asset and one factor column",
        ));
    }
    let cols: Vec<usize> = asset_cols.iter().chain(&factor_cols).map(|c| c.0).collect();

    let mut dates = Vec::new();
    let mut prices: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        report.price_rows += 1;
        let raw = rec.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw, DATE_FORMAT)
            .map_err(|_| Error::Parse(format!("unparseable date '{raw}' on data row {}", report.price_rows)))?;
        let mut row = Vec::with_capacity(cols.len());
        let mut rejected = None;
        for &c in &cols {
            match parse_cell(rec.get(c).unwrap_or("")) {
                Cell::Price(v) => row.push(v),
                Cell::Missing => {
                    rejected = Some((c, "missing price".to_string(), false));
                    break;
                }
                Cell::NonPositive(v) => {
                    rejected = Some((c, format!("non-positive price {v}"), true));
                    break;
                }
            }
        }
        if let Some((c, reason, nonpositive)) = rejected {
            let column = header.get(c).unwrap_or("").to_string();
            log::warn!("dropping {date}: {reason} in column '{column}'");
            if nonpositive {
                report.dropped_nonpositive += 1;
            } else {
                report.dropped_missing += 1;
            }
            report.rejected.push(RejectedRow { date, column, reason });
            continue;
        }
        dates.push(date);
        prices.push(row);
    }
    if dates.len() < 2 {
        return Err(Error::invalid("fewer than two complete price rows"));
    }
    let t = dates.len() - 1;
    let p = asset_cols.len();
    let all = DMatrix::from_fn(t, cols.len(), |i, j| (prices[i + 1][j] / prices[i][j]).ln());
    let panel = ReturnPanel::new(
        dates[1..].to_vec(),
        all.columns(0, p).into_owned(),
        all.columns(p, factor_cols.len()).into_owned(),
        asset_cols.into_iter().map(|c| c.1).collect(),
        factor_cols.into_iter().map(|c| c.1).collect(),
    )?;
    Ok((panel, report))
}

/// [`load_prices`] from a price CSV path and a manifest JSON path.
pub fn load_prices_from_paths(prices: &Path, manifest: &Path) -> Result<(ReturnPanel, LoadReport, Manifest)> {
    let m = Manifest::from_json(&std::fs::read_to_string(manifest)?)?;
    let (panel, report) = load_prices(std::fs::File::open(prices)?, &m)?;
    Ok((panel, report, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest::from_json(r#"{"columns": {"A": "asset", "F": "factor"}, "forced": {"A": ["F"]}}"#).unwrap()
    }

    #[test]
    fn log_return_definition() {
        let csv = "date,A,F\n2020-01-01,100,50\n2020-01-02,110,50\n";
        let (p, r) = load_prices(csv.as_bytes(), &manifest()).unwrap();
        assert_eq!(p.n_obs(), 1);
        assert_eq!(p.asset_returns()[(0, 0)], 1.1f64.ln());
        assert_eq!(p.factor_returns()[(0, 0)], 0.0);
        assert_eq!(r.warning_count(), 0);
    }

    #[test]
    fn missing_cell_drops_one_row() {
        let full = "date,A,F\n2020-01-01,100,50\n2020-01-02,101,51\n2020-01-03,102,52\n2020-01-06,103,53\n";
        let gap = "date,A,F\n2020-01-01,100,50\n2020-01-02,,51\n2020-01-03,102,52\n2020-01-06,103,53\n";
        let (p_full, _) = load_prices(full.as_bytes(), &manifest()).unwrap();
        let (p_gap, r) = load_prices(gap.as_bytes(), &manifest()).unwrap();
        assert_eq!(p_gap.n_obs(), p_full.n_obs() - 1);
        assert_eq!(r.warning_count(), 1);
        assert_eq!(r.dropped_missing, 1);
    }

    #[test]
    fn nonpositive_price_is_reported() {
        let csv = "date,A,F\n2020-01-01,100,50\n2020-01-02,-1,51\n2020-01-03,102,52\n";
        let (p, r) = load_prices(csv.as_bytes(), &manifest()).unwrap();
        assert_eq!(p.n_obs(), 1);
        assert_eq!(r.dropped_nonpositive, 1);
        assert_eq!(r.rejected[0].column, "A");
    }

    #[test]
    fn bad_date_rejects_file() {
        let csv = "date,A,F\n2020-01-01,100,50\n01/02/2020,101,51\n";
        assert!(matches!(load_prices(csv.as_bytes(), &manifest()), Err(Error::Parse(_))));
    }

    #[test]
    fn missing_manifest_column() {
        let csv = "date,A\n2020-01-01,100\n2020-01-02,101\n";
        assert!(load_prices(csv.as_bytes(), &manifest()).is_err());
    }

    #[test]
    fn forced_must_reference_factors() {
        assert!(Manifest::from_json(r#"{"columns": {"A": "asset", "F": "factor"}, "forced": {"A": ["A"]}}"#).is_err());
    }
}
