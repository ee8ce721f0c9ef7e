use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary asset-by-factor exposure matrix.
///
/// Row `i` lists the correlation risk factors asset `i` is exposed to.
/// Every asset carries at least one factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AssignmentFile", into = "AssignmentFile")]
pub struct FactorAssignment {
    asset_ids: Vec<String>,
    factor_names: Vec<String>,
    indicators: Vec<Vec<bool>>,
}

/// On-disk layout: `{"assets": [...], "factors": [...], "indicators": [[0|1, ...], ...]}`.
#[derive(Serialize, Deserialize)]
struct AssignmentFile {
    assets: Vec<String>,
    factors: Vec<String>,
    indicators: Vec<Vec<u8>>,
}

impl TryFrom<AssignmentFile> for FactorAssignment {
    type Error = Error;

    fn try_from(f: AssignmentFile) -> Result<Self> {
        let mut rows = Vec::with_capacity(f.indicators.len());
        for (i, row) in f.indicators.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for &v in row {
                match v {
                    0 => out.push(false),
                    1 => out.push(true),
                    other => {
                        return Err(Error::invalid(format!(
                            "indicator for asset {i} is {other}; expected 0 or 1"
                        )))
                    }
                }
            }
            rows.push(out);
        }
        FactorAssignment::new(f.assets, f.factors, rows)
    }
}

impl From<FactorAssignment> for AssignmentFile {
    fn from(a: FactorAssignment) -> Self {
        AssignmentFile {
            indicators: a
                .indicators
                .iter()
                .map(|r| r.iter().map(|&b| u8::from(b)).collect())
                .collect(),
            assets: a.asset_ids,
            factors: a.factor_names,
        }
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::invalid(format!("duplicate {what} label '{l}'")));
        }
    }
    Ok(())
}

impl FactorAssignment {
    pub fn new(asset_ids: Vec<String>, factor_names: Vec<String>, indicators: Vec<Vec<bool>>) -> Result<Self> {
        check_unique(&asset_ids, "asset")?;
        check_unique(&factor_names, "factor")?;
        if indicators.len() != asset_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: asset_ids.len(),
                actual: indicators.len(),
                context: "indicator rows vs assets",
            });
        }
        for (i, row) in indicators.iter().enumerate() {
            if row.len() != factor_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: factor_names.len(),
                    actual: row.len(),
                    context: "indicator columns vs factors",
                });
            }
            if !row.iter().any(|&b| b) {
                return Err(Error::invalid(format!(
                    "asset '{}' has no factor assigned",
                    asset_ids[i]
                )));
            }
        }
        Ok(Self {
            asset_ids,
            factor_names,
            indicators,
        })
    }

    /// Builds an assignment with generated labels `A0..`, `F0..`.
    pub fn from_rows(indicators: Vec<Vec<bool>>) -> Result<Self> {
        let p = indicators.len();
        let d = indicators.first().map_or(0, Vec::len);
        Self::new(
            (0..p).map(|i| format!("A{i}")).collect(),
            (0..d).map(|k| format!("F{k}")).collect(),
            indicators,
        )
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn is_exposed(&self, asset: usize, factor: usize) -> bool {
        self.indicators[asset][factor]
    }

    pub fn row(&self, asset: usize) -> &[bool] {
        &self.indicators[asset]
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_names.iter().position(|f| f == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
