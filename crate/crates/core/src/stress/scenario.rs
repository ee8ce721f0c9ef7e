use std::collections::BTreeMap;
use std::io::Read;

use crate::corrmodel::{apply_scenario, factors_from_header, parse_params_fields, CorrelationParams};
use crate::error::{Error, Result};

/// Contents of a scenario file.
///
/// * Shifts: header `coefficient,delta`, one additive change per row, with
///   coefficient names such as `eta`, `lambda_Energy` or `nu_MM-Americas`.
/// * Absolute: header `label,date,eta,lambda_<f>...,nu_<f>...`, one labelled
///   coefficient row per scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioFile {
    Shifts(BTreeMap<String, f64>),
    Absolute {
        factor_names: Vec<String>,
        scenarios: Vec<(String, CorrelationParams)>,
    },
}

impl ScenarioFile {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        match header.get(0).map(str::trim) {
            Some("coefficient") => {
                if header.len() != 2 || header.get(1).map(str::trim) != Some("delta") {
                    return Err(Error::Parse("shift scenario header must be coefficient,delta".into()));
                }
                let mut shifts = BTreeMap::new();
                for rec in r.records() {
                    let rec = rec?;
                    let name = rec[0].trim().to_string();
                    let delta: f64 = rec[1]
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad delta '{}' for '{name}'", &rec[1])))?;
                    if shifts.insert(name.clone(), delta).is_some() {
                        return Err(Error::Parse(format!("coefficient '{name}' listed twice")));
                    }
                }
                Ok(ScenarioFile::Shifts(shifts))
            }
            Some("label") => {
                let factor_names = factors_from_header(&header, 1)?;
                let mut scenarios = Vec::new();
                for rec in r.records() {
                    let rec = rec?;
                    let fields: Vec<&str> = rec.iter().collect();
                    let p = parse_params_fields(&fields[1..], factor_names.len())?;
                    scenarios.push((fields[0].to_string(), p));
                }
                if scenarios.is_empty() {
                    return Err(Error::Parse("scenario file has no rows".into()));
                }
                Ok(ScenarioFile::Absolute {
                    factor_names,
                    scenarios,
                })
            }
            _ => Err(Error::Parse(
                "scenario file must start with a 'coefficient' or 'label' column".into(),
            )),
        }
    }

    /// Scenario coefficients given the baseline; absolute files must use the
    /// same factor order as `factor_names`.
    pub fn resolve(
        &self,
        baseline: &CorrelationParams,
        factor_names: &[String],
    ) -> Result<Vec<(String, CorrelationParams)>> {
        match self {
            ScenarioFile::Shifts(shifts) => Ok(vec![(
                "shift".to_string(),
                apply_scenario(baseline, factor_names, shifts)?,
            )]),
            ScenarioFile::Absolute {
                factor_names: names,
                scenarios,
            } => {
                if names != factor_names {
                    let unknown: Vec<&String> = names.iter().filter(|n| !factor_names.contains(n)).collect();
                    return Err(Error::invalid(format!(
                        "scenario factors {names:?} do not match the model factors {factor_names:?} (unknown: {unknown:?})"
                    )));
                }
                Ok(scenarios.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["F1".into(), "F2".into()]
    }

    #[test]
    fn shift_file() {
        let f = ScenarioFile::read("coefficient,delta\nnu_F1,0.1\n".as_bytes()).unwrap();
        let base = CorrelationParams::zeros(2);
        let out = f.resolve(&base, &names()).unwrap();
        assert_eq!(out[0].1.nu, vec![0.1, 0.0]);
        let bad = ScenarioFile::read("coefficient,delta\nnu_F9,0.1\nlambda_X,1\n".as_bytes()).unwrap();
        let err = bad.resolve(&base, &names()).unwrap_err().to_string();
        assert!(err.contains("nu_F9") && err.contains("lambda_X"));
    }

    #[test]
    fn absolute_file() {
        let text = "label,date,eta,lambda_F1,lambda_F2,nu_F1,nu_F2\ncrisis,,0.5,0.0,0.1,0.2,0.3\n";
        let f = ScenarioFile::read(text.as_bytes()).unwrap();
        let out = f.resolve(&CorrelationParams::zeros(2), &names()).unwrap();
        assert_eq!(out[0].0, "crisis");
        assert_eq!(out[0].1.eta, Some(0.5));
        assert!(f
            .resolve(&CorrelationParams::zeros(2), &["F1".into(), "G".into()])
            .is_err());
    }

    #[test]
    fn unknown_layout() {
        assert!(ScenarioFile::read("x,y\n1,2\n".as_bytes()).is_err());
    }
}
