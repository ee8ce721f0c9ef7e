use std::io::{Read, Write};

use chrono::NaiveDate;

use super::CorrelationParams;
use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Header row `date,eta,lambda_<f>...,nu_<f>...`.
pub fn params_header(factor_names: &[String]) -> Vec<String> {
    let mut h = vec!["date".to_string(), "eta".to_string()];
    h.extend(factor_names.iter().map(|f| format!("lambda_{f}")));
    h.extend(factor_names.iter().map(|f| format!("nu_{f}")));
    h
}

fn format_float(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

pub(crate) fn params_record(p: &CorrelationParams) -> Vec<String> {
    let mut r = Vec::with_capacity(2 + 2 * p.n_factors());
    r.push(p.date.map(|d| d.format(DATE_FORMAT).to_string()).unwrap_or_default());
    r.push(p.eta.map(format_float).unwrap_or_default());
    r.extend(p.lambda.iter().copied().map(format_float));
    r.extend(p.nu.iter().copied().map(format_float));
    r
}

/// Writes a params history; `eta` is left empty where the constant was omitted.
pub fn write_params_csv<W: Write>(writer: W, factor_names: &[String], rows: &[CorrelationParams]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(params_header(factor_names))?;
    for p in rows {
        if p.n_factors() != factor_names.len() {
            return Err(Error::DimensionMismatch {
                expected: factor_names.len(),
                actual: p.n_factors(),
                context: "params row vs header",
            });
        }
        w.write_record(params_record(p))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the factor names out of a params header, after `skip` leading columns.
pub(crate) fn factors_from_header(header: &csv::StringRecord, skip: usize) -> Result<Vec<String>> {
    let cols: Vec<&str> = header.iter().skip(skip).collect();
    if cols.first() != Some(&"date") || cols.get(1) != Some(&"eta") || !(cols.len() - 2).is_multiple_of(2) {
        return Err(Error::Parse(format!("unexpected params header {:?}", header)));
    }
    let d = (cols.len() - 2) / 2;
    let mut names = Vec::with_capacity(d);
    for k in 0..d {
        let lam = cols[2 + k]
            .strip_prefix("lambda_")
            .ok_or_else(|| Error::Parse(format!("expected lambda_ column, got '{}'", cols[2 + k])))?;
        let nu = cols[2 + d + k]
            .strip_prefix("nu_")
            .ok_or_else(|| Error::Parse(format!("expected nu_ column, got '{}'", cols[2 + d + k])))?;
        if lam != nu {
            return Err(Error::Parse(format!("factor order differs: '{lam}' vs '{nu}'")));
        }
        names.push(lam.to_string());
    }
    Ok(names)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: '{s}'")))
}

pub(crate) fn parse_params_fields(fields: &[&str], d: usize) -> Result<CorrelationParams> {
    if fields.len() != 2 + 2 * d {
        return Err(Error::Parse(format!(
            "expected {} fields, got {}",
            2 + 2 * d,
            fields.len()
        )));
    }
    let date = match fields[0].trim() {
        "" => None,
        s => Some(NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| Error::Parse(format!("bad date '{s}'")))?),
    };
    let eta = match fields[1].trim() {
        "" => None,
        s => Some(parse_f64(s)?),
    };
    let lambda = fields[2..2 + d]
        .iter()
        .map(|s| parse_f64(s))
        .collect::<Result<Vec<_>>>()?;
    let nu = fields[2 + d..]
        .iter()
        .map(|s| parse_f64(s))
        .collect::<Result<Vec<_>>>()?;
    let mut p = CorrelationParams::new(eta, lambda, nu)?;
    p.date = date;
    Ok(p)
}

/// Reads a params history, returning the factor names from the header.
pub fn read_params_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<CorrelationParams>)> {
    let mut r = csv::Reader::from_reader(reader);
    let names = factors_from_header(r.headers()?, 0)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(parse_params_fields(&fields, names.len())?);
    }
    Ok((names, rows))
}
