use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::portfolio::{var_gaussian, PortfolioSpec};
use crate::corrmodel::{
    ensure_psd, valid_model_correlation, CorrelationMatrix, CorrelationParams, FactorAssignment, MatrixSource,
    DATE_FORMAT,
};
use crate::error::{Error, Result};
use crate::ingest::ReturnPanel;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarPoint {
    pub date: NaiveDate,
    pub var: f64,
    pub stressed_var: f64,
}

fn assignment_index(assignments: &[(NaiveDate, FactorAssignment)], date: NaiveDate) -> usize {
    assignments.partition_point(|(d, _)| *d <= date).saturating_sub(1)
}

/// Baseline and stressed VaR for every date with a full trailing window.
///
/// On date `t` the volatilities and empirical correlation come from the
/// `window` returns strictly before `t`. The stressed VaR keeps those
/// volatilities and replaces the correlation by the repaired model
/// correlation of `scenario` under the assignment in force on `t` (the latest
/// entry of `assignments` dated on or before `t`, else the first).
pub fn stressed_var_series(
    panel: &ReturnPanel,
    assignments: &[(NaiveDate, FactorAssignment)],
    scenario: &CorrelationParams,
    portfolio: &PortfolioSpec,
    alpha: f64,
    window: usize,
) -> Result<Vec<VarPoint>> {
    if assignments.is_empty() {
        return Err(Error::invalid("at least one factor assignment is required"));
    }
    if assignments.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid("assignment dates must be strictly increasing"));
    }
    if window < 2 {
        return Err(Error::invalid("window must hold at least two returns"));
    }
    if panel.n_obs() <= window {
        return Err(Error::invalid(format!(
            "panel has {} rows; a {window}-day window leaves no evaluation date",
            panel.n_obs()
        )));
    }
    let p = panel.n_assets();
    if portfolio.n_assets() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: portfolio.n_assets(),
            context: "portfolio vs panel assets",
        });
    }
    let mut out = Vec::with_capacity(panel.n_obs() - window);
    let mut cached: Option<(usize, CorrelationMatrix)> = None;
    for t in window..panel.n_obs() {
        let date = panel.dates()[t];
        let r = panel.asset_returns().rows(t - window, window).into_owned();
        let cov = linalg::sample_covariance(&r);
        let vols: Vec<f64> = (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
        let corr = linalg::correlation_of_columns(&r)
            .ok_or_else(|| Error::Numerical(format!("constant asset return in the window before {date}")))?;
        let empirical = ensure_psd(CorrelationMatrix::new(corr, MatrixSource::Empirical)?)?;
        let k = assignment_index(assignments, date);
        if cached.as_ref().is_none_or(|(c, _)| *c != k) {
            cached = Some((k, valid_model_correlation(scenario, &assignments[k].1)?));
        }
        let stressed = &cached.as_ref().expect("filled above").1;
        let pf = portfolio.with_vols(vols)?;
        out.push(VarPoint {
            date,
            var: var_gaussian(&pf, &empirical, alpha)?,
            stressed_var: var_gaussian(&pf, stressed, alpha)?,
        });
    }
    Ok(out)
}

/// Writes `date,var,stressed_var`.
pub fn write_var_csv<W: Write>(writer: W, points: &[VarPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "var", "stressed_var"])?;
    for p in points {
        w.write_record([
            p.date.format(DATE_FORMAT).to_string(),
            format!("{:?}", p.var),
            format!("{:?}", p.stressed_var),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_var_csv<R: Read>(reader: R) -> Result<Vec<VarPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().collect::<Vec<_>>() != ["date", "var", "stressed_var"] {
        return Err(Error::Parse("expected header date,var,stressed_var".into()));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("not a number: '{s}'")))
    };
    r.records()
        .map(|rec| {
            let rec = rec?;
            let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
                .map_err(|_| Error::Parse(format!("bad date '{}'", &rec[0])))?;
            Ok(VarPoint {
                date,
                var: num(&rec[1])?,
                stressed_var: num(&rec[2])?,
            })
        })
        .collect()
}
