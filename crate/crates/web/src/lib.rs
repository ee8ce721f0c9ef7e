//! Interactive views for the browser demo: the model heatmap and VaR for a
//! coefficient vector, nearest-correlation repair of a typed matrix, and a
//! two-dimensional HDR reverse stress scatter.
//!
//! Each view is a plain function returning a serializable struct; the
//! `*_json` wrappers are the JavaScript entry points.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use corrstress::corrmodel::{
    eigenvalue_clip_repair, model_correlation, nearest_correlation, valid_model_correlation, CorrelationParams,
    FactorAssignment, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use corrstress::distfit::{sample_nig, NigParams};
use corrstress::rng;
use corrstress::stress::{
    argmax_variance, hdr_threshold_log, scenario_variance, var_from_variance, ParamLayout, PortfolioSpec,
};
use corrstress::{Error, Result};

pub const ASSETS: [&str; 6] = ["Bank A", "Bank B", "Oil A", "Oil B", "Conglo A", "Conglo B"];
pub const FACTORS: [&str; 2] = ["Financials", "Energy"];
const PORTFOLIO_VALUE: f64 = 1_000_000.0;
const DAILY_VOL: f64 = 0.015;
const MAX_SCATTER_POINTS: usize = 20_000;

pub fn demo_assignment() -> FactorAssignment {
    FactorAssignment::new(
        ASSETS.iter().map(|s| s.to_string()).collect(),
        FACTORS.iter().map(|s| s.to_string()).collect(),
        vec![
            vec![true, false],
            vec![true, false],
            vec![false, true],
            vec![false, true],
            vec![true, true],
            vec![true, true],
        ],
    )
    .expect("static assignment is valid")
}

fn demo_portfolio() -> PortfolioSpec {
    PortfolioSpec::equal_weight(PORTFOLIO_VALUE, vec![DAILY_VOL; ASSETS.len()]).expect("static portfolio is valid")
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelView {
    pub assets: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub raw_min_eigenvalue: f64,
    pub repaired: bool,
    pub var: f64,
    pub var_uncorrelated: f64,
}

/// Model correlation for `beta = [eta, lambda_1, lambda_2, nu_1, nu_2]` and
/// the Gaussian VaR of an equal-weight portfolio.
pub fn model_view(beta: &[f64], alpha: f64) -> Result<ModelView> {
    let params = CorrelationParams::from_vector(beta)?;
    let a = demo_assignment();
    let raw = model_correlation(&params, &a)?;
    let valid = valid_model_correlation(&params, &a)?;
    let pf = demo_portfolio();
    let var = var_from_variance(scenario_variance(&params, &a, &pf)?, pf.value, alpha)?;
    let var_uncorrelated = var_from_variance(
        pf.weights.iter().zip(&pf.vols).map(|(w, s)| (w * s).powi(2)).sum(),
        pf.value,
        alpha,
    )?;
    Ok(ModelView {
        assets: a.asset_ids().to_vec(),
        matrix: rows(valid.values()),
        raw_min_eigenvalue: raw.min_eigenvalue(),
        repaired: valid.values() != raw.values(),
        var,
        var_uncorrelated,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RepairView {
    pub output: Vec<Vec<f64>>,
    pub min_eigenvalue_before: f64,
    pub min_eigenvalue_after: f64,
    pub distance: f64,
    pub clip_distance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Parses a square matrix written one row per line, entries separated by
/// commas or whitespace.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let parsed: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("'{t}' is not a number")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = parsed.len();
    if n == 0 {
        return Err(Error::InvalidInput("matrix is empty".into()));
    }
    if let Some(r) = parsed.iter().position(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!(
            "row {} has {} entries; expected {n}",
            r + 1,
            parsed[r].len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| parsed[i][j]))
}

/// Nearest correlation matrix to the typed input, compared with eigenvalue clipping.
pub fn repair_view(text: &str) -> Result<RepairView> {
    let m = parse_matrix(text)?;
    let nc = nearest_correlation(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let clip = eigenvalue_clip_repair(&m)?;
    let sym = (&m + m.transpose()) * 0.5;
    let mut target = sym.clone();
    target.fill_diagonal(1.0);
    Ok(RepairView {
        output: rows(nc.matrix.values()),
        min_eigenvalue_before: min_eigenvalue(&target),
        min_eigenvalue_after: nc.matrix.min_eigenvalue(),
        distance: nc.distance,
        clip_distance: (clip.values() - &target).norm(),
        iterations: nc.iterations,
        converged: nc.converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatterView {
    /// `(eta, nu_Financials)` samples.
    pub points: Vec<[f64; 2]>,
    pub in_region: Vec<bool>,
    pub ln_f_q: f64,
    pub n_in_region: usize,
    pub star: usize,
    pub var_star: f64,
    pub var_at_mean: f64,
}

/// Scatter settings for [`scatter_view`].
#[derive(Debug, Clone, Copy)]
pub struct ScatterSettings {
    pub gamma: [f64; 2],
    pub rho: f64,
    pub chi: f64,
    pub q: f64,
    pub n: usize,
    pub seed: u64,
    pub alpha: f64,
}

/// Layout in which only `eta` and `nu_Financials` move.
pub fn scatter_layout() -> ParamLayout {
    ParamLayout {
        n_factors: 2,
        active: vec![0, 3],
        fixed: vec![(1, 0.0), (2, 0.0), (4, 0.3)],
        eta_omitted: false,
    }
}

/// Samples a bivariate NIG law over `(eta, nu_Financials)`, marks the
/// highest-density region at level `1 - q` and picks the in-region sample
/// with the largest portfolio variance.
pub fn scatter_view(s: ScatterSettings) -> Result<ScatterView> {
    if !(100..=MAX_SCATTER_POINTS).contains(&s.n) {
        return Err(Error::InvalidInput(format!("n must lie in 100..={MAX_SCATTER_POINTS}")));
    }
    if !(s.rho > -1.0 && s.rho < 1.0) {
        return Err(Error::InvalidInput("rho must lie in (-1, 1)".into()));
    }
    let sd = [0.12, 0.08];
    let sigma = DMatrix::from_row_slice(
        2,
        2,
        &[
            sd[0] * sd[0],
            s.rho * sd[0] * sd[1],
            s.rho * sd[0] * sd[1],
            sd[1] * sd[1],
        ],
    );
    let nig = NigParams::new(
        s.chi,
        s.chi,
        DVector::from_vec(vec![0.3, 0.2]),
        sigma,
        DVector::from_vec(s.gamma.to_vec()),
    )?;
    let x = sample_nig(&nig, s.n, &mut rng::stream(s.seed, rng::stage::SAMPLING, 0));
    let dens = nig.density();
    let points: Vec<[f64; 2]> = (0..s.n).map(|i| [x[(i, 0)], x[(i, 1)]]).collect();
    let ln: Vec<f64> = points.iter().map(|p| dens.log_density(p)).collect();
    let region = hdr_threshold_log(&ln, s.q)?;
    let in_region: Vec<bool> = ln.iter().map(|&l| region.contains_log(l)).collect();

    let layout = scatter_layout();
    let (a, pf) = (demo_assignment(), demo_portfolio());
    let variances: Vec<f64> = points
        .iter()
        .map(|p| scenario_variance(&layout.embed(p)?, &a, &pf))
        .collect::<Result<_>>()?;
    let star = argmax_variance(&variances, &in_region)
        .ok_or_else(|| Error::Numerical("no sample inside the region".into()))?;
    let mean = layout.embed(nig.mean().as_slice())?;
    Ok(ScatterView {
        n_in_region: in_region.iter().filter(|&&b| b).count(),
        points,
        in_region,
        ln_f_q: region.ln_f_q,
        star,
        var_star: var_from_variance(variances[star], pf.value, s.alpha)?,
        var_at_mean: var_from_variance(scenario_variance(&mean, &a, &pf)?, pf.value, s.alpha)?,
    })
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn model_view_json(
    eta: f64,
    lambda_1: f64,
    lambda_2: f64,
    nu_1: f64,
    nu_2: f64,
    alpha: f64,
) -> std::result::Result<String, JsError> {
    js(model_view(&[eta, lambda_1, lambda_2, nu_1, nu_2], alpha))
}

#[wasm_bindgen]
pub fn repair_view_json(text: &str) -> std::result::Result<String, JsError> {
    js(repair_view(text))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn scatter_view_json(
    gamma_x: f64,
    gamma_y: f64,
    rho: f64,
    chi: f64,
    q: f64,
    n: usize,
    seed: u32,
    alpha: f64,
) -> std::result::Result<String, JsError> {
    js(scatter_view(ScatterSettings {
        gamma: [gamma_x, gamma_y],
        rho,
        chi,
        q,
        n,
        seed: u64::from(seed),
        alpha,
    }))
}
