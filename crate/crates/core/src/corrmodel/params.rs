use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the factor correlation surface.
///
/// `eta` is the base level, `lambda[k]` applies when exactly one asset of a
/// pair is exposed to factor `k`, `nu[k]` when both are. An absent `eta`
/// means the constant was dropped at calibration and evaluates as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    pub date: Option<NaiveDate>,
    pub eta: Option<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
}

/// Names one coefficient of [`CorrelationParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coefficient {
    Eta,
    Inter(usize),
    Intra(usize),
}

impl Coefficient {
    /// Parses `eta`, `lambda_<factor>` / `inter_<factor>` or `nu_<factor>` / `intra_<factor>`.
    pub fn parse(name: &str, factor_names: &[String]) -> Result<Self> {
        if name == "eta" {
            return Ok(Coefficient::Eta);
        }
        let lookup = |f: &str| {
            factor_names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::invalid(format!("unknown factor '{f}' in coefficient '{name}'")))
        };
        if let Some(f) = name.strip_prefix("lambda_").or_else(|| name.strip_prefix("inter_")) {
            return Ok(Coefficient::Inter(lookup(f)?));
        }
        if let Some(f) = name.strip_prefix("nu_").or_else(|| name.strip_prefix("intra_")) {
            return Ok(Coefficient::Intra(lookup(f)?));
        }
        Err(Error::invalid(format!("unknown coefficient '{name}'")))
    }

    pub fn name(&self, factor_names: &[String]) -> String {
        match *self {
            Coefficient::Eta => "eta".to_string(),
            Coefficient::Inter(k) => format!("lambda_{}", factor_names[k]),
            Coefficient::Intra(k) => format!("nu_{}", factor_names[k]),
        }
    }
}

impl CorrelationParams {
    pub fn new(eta: Option<f64>, lambda: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let p = Self {
            date: None,
            eta,
            lambda,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero coefficients with the constant present.
    pub fn zeros(n_factors: usize) -> Self {
        Self {
            date: None,
            eta: Some(0.0),
            lambda: vec![0.0; n_factors],
            nu: vec![0.0; n_factors],
        }
    }

    pub fn with_date(mut self, date: NaiveDate) -> Self {
        self.date = Some(date);
        self
    }

    pub fn n_factors(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.len() != self.nu.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lambda.len(),
                actual: self.nu.len(),
                context: "nu vs lambda length",
            });
        }
        let all = self.eta.iter().chain(&self.lambda).chain(&self.nu);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::invalid("correlation coefficients must be finite"));
        }
        Ok(())
    }

    /// Constant used when evaluating the surface.
    pub fn eta_or_zero(&self) -> f64 {
        self.eta.unwrap_or(0.0)
    }

    pub fn get(&self, c: Coefficient) -> f64 {
        match c {
            Coefficient::Eta => self.eta_or_zero(),
            Coefficient::Inter(k) => self.lambda[k],
            Coefficient::Intra(k) => self.nu[k],
        }
    }

    /// Flattens to `(eta, lambda_1..lambda_d, nu_1..nu_d)`, with an absent `eta` as 0.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 2 * self.lambda.len());
        v.push(self.eta_or_zero());
        v.extend_from_slice(&self.lambda);
        v.extend_from_slice(&self.nu);
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector); `v` has length `2d + 1`.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() % 2 != 1 {
            return Err(Error::invalid(format!(
                "coefficient vector length {} is not 2d+1",
                v.len()
            )));
        }
        let d = (v.len() - 1) / 2;
        Self::new(Some(v[0]), v[1..=d].to_vec(), v[d + 1..].to_vec())
    }
}

/// Shifts the named coefficients additively; `params` is left untouched.
///
/// Keys use the names accepted by [`Coefficient::parse`].
pub fn apply_scenario(
    params: &CorrelationParams,
    factor_names: &[String],
    shifts: &BTreeMap<String, f64>,
) -> Result<CorrelationParams> {
    if factor_names.len() != params.n_factors() {
        return Err(Error::DimensionMismatch {
            expected: params.n_factors(),
            actual: factor_names.len(),
            context: "factor names vs params",
        });
    }
    let mut unknown = Vec::new();
    let mut parsed = Vec::with_capacity(shifts.len());
    for (name, &delta) in shifts {
        match Coefficient::parse(name, factor_names) {
            Ok(c) if delta.is_finite() => parsed.push((c, delta)),
            Ok(_) => return Err(Error::invalid(format!("shift for '{name}' is not finite"))),
            Err(_) => unknown.push(name.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::invalid(format!(
            "scenario references unknown coefficients: {}",
            unknown.join(", ")
        )));
    }
    let mut out = params.clone();
    for (c, delta) in parsed {
        match c {
            Coefficient::Eta => out.eta = Some(out.eta_or_zero() + delta),
            Coefficient::Inter(k) => out.lambda[k] += delta,
            Coefficient::Intra(k) => out.nu[k] += delta,
        }
    }
    Ok(out)
}
