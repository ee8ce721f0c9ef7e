use nalgebra::{DMatrix, DVector};

use super::bayes::GPrior;
use super::mcmc::{mcmc_model_search, InclusionPrior, McmcConfig, PipResult};
use crate::corrmodel::FactorAssignment;
use crate::error::{Error, Result};
use crate::rng;

/// Bounds applied to propagated PIPs before they are reused as prior weights.
pub const PIP_FLOOR: f64 = 0.01;
pub const PIP_CEIL: f64 = 0.99;

/// Prior inclusion weights for one selection round.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionPrior {
    /// First round: listed factors forced in, every other factor at `theta`.
    Initial { forced: Vec<Vec<usize>>, theta: f64 },
    /// Later rounds: the previous round's PIPs per asset.
    Propagated { pips: Vec<Vec<f64>> },
}

impl SelectionPrior {
    fn inclusion(&self, asset: usize, d: usize) -> Result<InclusionPrior> {
        match self {
            SelectionPrior::Initial { forced, theta } => {
                let f = forced
                    .get(asset)
                    .ok_or_else(|| Error::invalid(format!("no forced set for asset {asset}")))?;
                InclusionPrior::uniform(d, *theta, f)
            }
            SelectionPrior::Propagated { pips } => {
                let w = pips
                    .get(asset)
                    .ok_or_else(|| Error::invalid(format!("no previous PIPs for asset {asset}")))?;
                if w.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: w.len(),
                        context: "previous PIPs vs factors",
                    });
                }
                InclusionPrior::new(w.iter().map(|v| v.clamp(PIP_FLOOR, PIP_CEIL)).collect(), &[])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectionConfig {
    pub mcmc: McmcConfig,
    pub prior: GPrior,
    pub seed: u64,
    /// Selection round; separates RNG streams between quarters.
    pub round: u32,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub assignment: FactorAssignment,
    pub results: Vec<PipResult>,
}

impl Selection {
    /// PIPs to carry into the next round.
    pub fn next_prior(&self) -> SelectionPrior {
        SelectionPrior::Propagated {
            pips: self.results.iter().map(|r| r.pip.clone()).collect(),
        }
    }
}

/// Columns scaled to zero mean and unit variance; constant columns become zero.
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            col.apply(|v| *v = (*v - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Runs the model search for one asset: `y` is its return column over the window.
pub fn select_asset(
    asset: usize,
    y: &DVector<f64>,
    x_std: &DMatrix<f64>,
    prior: &SelectionPrior,
    config: &SelectionConfig,
) -> Result<PipResult> {
    let d = x_std.ncols();
    let inclusion = prior.inclusion(asset, d)?;
    let y_std = standardize_columns(&DMatrix::from_column_slice(y.len(), 1, y.as_slice()));
    let y_std = DVector::from_column_slice(y_std.as_slice());
    let mut rng = rng::stream(config.seed, rng::stage::SELECTION | (config.round << 8), asset as u32);
    mcmc_model_search(x_std, &y_std, &inclusion, &config.prior, config.mcmc, &mut rng)
}

/// Median-probability model, or the single highest-PIP factor when that model
/// is empty (lowest index on ties).
pub fn assignment_row(r: &PipResult) -> Vec<bool> {
    if r.selected.iter().any(|&s| s) {
        return r.selected.clone();
    }
    let mut best = 0;
    for (k, &p) in r.pip.iter().enumerate() {
        if p > r.pip[best] {
            best = k;
        }
    }
    (0..r.pip.len()).map(|k| k == best).collect()
}

/// Selects factors for every asset and returns the median-probability
/// assignment together with the PIPs for the next round.
///
/// `asset_returns` is `T x p`, `factor_returns` is `T x d`, aligned on dates.
pub fn select_and_propagate(
    prior: &SelectionPrior,
    asset_returns: &DMatrix<f64>,
    factor_returns: &DMatrix<f64>,
    asset_ids: &[String],
    factor_names: &[String],
    config: &SelectionConfig,
) -> Result<Selection> {
    let (t, p) = asset_returns.shape();
    let d = factor_returns.ncols();
    if t < 3 {
        return Err(Error::invalid(format!(
            "selection window has {t} rows; need at least 3"
        )));
    }
    if factor_returns.nrows() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            actual: factor_returns.nrows(),
            context: "factor rows vs asset rows",
        });
    }
    if asset_ids.len() != p || factor_names.len() != d {
        return Err(Error::invalid("label counts do not match the return matrices"));
    }
    let x_std = standardize_columns(factor_returns);
    let run = |i: usize| -> Result<PipResult> {
        let y = asset_returns.column(i).into_owned();
        select_asset(i, &y, &x_std, prior, config)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<PipResult> = {
        use rayon::prelude::*;
        (0..p).into_par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<PipResult> = (0..p).map(run).collect::<Result<_>>()?;

    let rows = results.iter().map(assignment_row).collect();
    let assignment = FactorAssignment::new(asset_ids.to_vec(), factor_names.to_vec(), rows)?;
    Ok(Selection { assignment, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn zero_theta_keeps_forced_pair() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (t, d) = (120, 5);
        let f = DMatrix::from_fn(t, d, |_, _| StandardNormal.sample(&mut rng));
        // asset loads on factor 4 strongly, but only 0 and 1 are allowed
        let a = DMatrix::from_fn(t, 1, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            3.0 * f[(i, 4)] + e
        });
        let prior = SelectionPrior::Initial {
            forced: vec![vec![0, 1]],
            theta: 0.0,
        };
        let cfg = SelectionConfig {
            mcmc: McmcConfig::with_iterations(2_000),
            ..Default::default()
        };
        let sel = select_and_propagate(&prior, &a, &f, &labels("A", 1), &labels("F", d), &cfg).unwrap();
        assert_eq!(sel.assignment.row(0), &[true, true, false, false, false]);
        assert_eq!(sel.results[0].pip, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_model_falls_back_to_top_pip() {
        let r = PipResult {
            pip: vec![0.1, 0.4, 0.4],
            selected: vec![false; 3],
            n_models_visited: 3,
            acceptance_rate: 0.5,
            stuck: false,
        };
        assert_eq!(assignment_row(&r), vec![false, true, false]);
    }

    #[test]
    fn propagated_weights_are_clipped() {
        let prior = SelectionPrior::Propagated {
            pips: vec![vec![1.0, 0.0, 0.4]],
        };
        let inc = prior.inclusion(0, 3).unwrap();
        assert_eq!(inc.weights(), &[PIP_CEIL, PIP_FLOOR, 0.4]);
        assert!(!inc.is_forced(0));
    }

    #[test]
    fn empty_window_rejected() {
        let prior = SelectionPrior::Initial {
            forced: vec![vec![0]],
            theta: 0.5,
        };
        let err = select_and_propagate(
            &prior,
            &DMatrix::zeros(0, 1),
            &DMatrix::zeros(0, 2),
            &labels("A", 1),
            &labels("F", 2),
            &SelectionConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn standardized_columns() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0]);
        let s = standardize_columns(&x);
        assert!(s.column(0).sum().abs() < 1e-12);
        let var = s.column(0).norm_squared() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
        assert!(s.column(1).iter().all(|&v| v == 0.0));
    }
}
