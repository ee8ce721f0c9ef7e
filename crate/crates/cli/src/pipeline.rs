use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use corrstress::corrmodel::{
    calibrate, write_params_csv, CorrelationMatrix, CorrelationParams, FactorAssignment, MatrixSource, DATE_FORMAT,
};
use corrstress::distfit::{fit_em, FitDiagnostics, NigParams};
use corrstress::factorselect::{
    expected_size_weight, select_and_propagate, GPrior, McmcConfig, Selection, SelectionConfig, SelectionPrior,
};
use corrstress::ingest::{load_prices_from_paths, thin, LoadReport, Manifest, ReturnPanel, Schedule};
use corrstress::linalg;
use corrstress::stress::{
    reverse_stress_historical, reverse_stress_mc, scenario_variance, stressed_var_series, var_from_variance,
    write_var_csv, ParamLayout, PortfolioSpec, ReverseStressConfig, StressResult, VarPoint,
};
use corrstress::{Error, Result};

use crate::config::RunConfig;
use crate::report;

/// Name of the file left in the output directory when a stage fails.
pub const FAILURE_MARKER: &str = "FAILED_STAGE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Ingest,
    SelectFactors,
    Calibrate,
    FitDist,
    ReverseStress,
    Var,
    Stress,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::SelectFactors => "select-factors",
            Stage::Calibrate => "calibrate",
            Stage::FitDist => "fit-dist",
            Stage::ReverseStress => "reverse-stress",
            Stage::Var => "var",
            Stage::Stress => "stress",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    /// 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        if self.source.is_validation() {
            2
        } else if self.source.is_io() {
            4
        } else {
            3
        }
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub struct Inputs {
    pub panel: ReturnPanel,
    pub report: LoadReport,
    pub manifest: Manifest,
    pub schedule: Schedule,
}

pub fn ingest(cfg: &RunConfig) -> Result<Inputs> {
    let (panel, report, manifest) = load_prices_from_paths(&cfg.prices, &cfg.manifest)?;
    if report.warning_count() > 0 {
        log::warn!(
            "{} price rows dropped ({} missing, {} non-positive)",
            report.warning_count(),
            report.dropped_missing,
            report.dropped_nonpositive
        );
    }
    let schedule = Schedule::build(panel.dates(), cfg.window, cfg.selection_window)?;
    Ok(Inputs {
        panel,
        report,
        manifest,
        schedule,
    })
}

pub struct SelectionRound {
    pub date: NaiveDate,
    pub selection: Selection,
}

fn forced_indices(inputs: &Inputs) -> Result<Vec<Vec<usize>>> {
    let factors = inputs.panel.factor_labels();
    inputs
        .panel
        .asset_labels()
        .iter()
        .map(|a| {
            inputs
                .manifest
                .forced
                .get(a)
                .map(|names| {
                    names
                        .iter()
                        .map(|n| {
                            factors
                                .iter()
                                .position(|f| f == n)
                                .ok_or_else(|| Error::InvalidInput(format!("forced factor '{n}' not loaded")))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .unwrap_or_else(|| Ok(Vec::new()))
        })
        .collect()
}

/// Quarterly factor selection up to and including `until`.
pub fn select_factors(cfg: &RunConfig, inputs: &Inputs, until: Option<NaiveDate>) -> Result<Vec<SelectionRound>> {
    let d = inputs.panel.n_factors();
    let theta = expected_size_weight(cfg.target_model_size, d)?;
    let mut prior = SelectionPrior::Initial {
        forced: forced_indices(inputs)?,
        theta,
    };
    let mut rounds = Vec::new();
    for (r, &date) in inputs.schedule.selection_dates.iter().enumerate() {
        if until.is_some_and(|u| date > u) && !rounds.is_empty() {
            break;
        }
        let w = inputs.panel.window_slice(date, cfg.selection_window)?;
        let sel_cfg = SelectionConfig {
            mcmc: McmcConfig::with_iterations(cfg.mcmc_iterations),
            prior: GPrior::default(),
            seed: cfg.seed,
            round: r as u32,
        };
        let selection = select_and_propagate(
            &prior,
            w.asset_returns(),
            w.factor_returns(),
            w.asset_labels(),
            w.factor_labels(),
            &sel_cfg,
        )?;
        prior = selection.next_prior();
        log::info!("selected factors on {date}");
        rounds.push(SelectionRound { date, selection });
    }
    Ok(rounds)
}

pub fn assignment_schedule(rounds: &[SelectionRound]) -> Vec<(NaiveDate, FactorAssignment)> {
    rounds
        .iter()
        .map(|r| (r.date, r.selection.assignment.clone()))
        .collect()
}

/// Assignment in force on `date`: the latest entry not after it, else the first.
pub fn assignment_on(assignments: &[(NaiveDate, FactorAssignment)], date: NaiveDate) -> &FactorAssignment {
    let k = assignments.partition_point(|(d, _)| *d <= date).saturating_sub(1);
    &assignments[k].1
}

pub struct Calibration {
    pub params: Vec<CorrelationParams>,
    pub skipped: Vec<(NaiveDate, String)>,
}

/// Empirical correlation of the `window` asset returns strictly before `date`.
pub fn empirical_correlation(panel: &ReturnPanel, date: NaiveDate, window: usize) -> Result<CorrelationMatrix> {
    let w = panel.window_slice(date, window)?;
    let c = linalg::correlation_of_columns(w.asset_returns())
        .ok_or_else(|| Error::Numerical(format!("constant asset return in the window before {date}")))?;
    CorrelationMatrix::new(c, MatrixSource::Empirical)
}

/// Daily calibration; dates whose design cannot be solved are skipped and listed.
pub fn calibrate_history(
    cfg: &RunConfig,
    inputs: &Inputs,
    assignments: &[(NaiveDate, FactorAssignment)],
    dates: &[NaiveDate],
) -> Result<Calibration> {
    if assignments.is_empty() {
        return Err(Error::InvalidInput("no factor assignment available".into()));
    }
    let mut params = Vec::with_capacity(dates.len());
    let mut skipped = Vec::new();
    for &t in dates {
        let fit = empirical_correlation(&inputs.panel, t, cfg.window)
            .and_then(|emp| calibrate(&emp, assignment_on(assignments, t)));
        match fit {
            Ok(f) => params.push(f.params.with_date(t)),
            Err(e) if e.is_io() || e.is_validation() => return Err(e),
            Err(e) => {
                log::warn!("calibration skipped on {t}: {e}");
                skipped.push((t, e.to_string()));
            }
        }
    }
    if params.is_empty() {
        return Err(Error::Numerical("no date could be calibrated".into()));
    }
    Ok(Calibration { params, skipped })
}

pub struct FittedDistribution {
    pub layout: ParamLayout,
    pub nig: NigParams,
    pub diagnostics: FitDiagnostics,
    pub stride: usize,
    pub n_used: usize,
}

pub fn fit_distribution(
    cfg: &RunConfig,
    factor_names: &[String],
    history: &[CorrelationParams],
) -> Result<FittedDistribution> {
    let stride = cfg.thin_stride_for(history.len());
    let thinned = thin(history, stride)?;
    let layout = ParamLayout::from_history(&thinned)?;
    let x = layout.history_matrix(&thinned)?;
    let (nig, diagnostics) = fit_em(&x, cfg.em_tol, cfg.em_max_iter)?;
    if !diagnostics.converged {
        log::warn!("EM stopped after {} iterations without converging", diagnostics.n_iter);
    }
    let nig = nig.with_labels(layout.labels(factor_names))?;
    Ok(FittedDistribution {
        layout,
        nig,
        diagnostics,
        stride,
        n_used: thinned.len(),
    })
}

/// Configured weights and value, with volatilities from the window before `date`.
pub fn portfolio_on(cfg: &RunConfig, panel: &ReturnPanel, date: NaiveDate) -> Result<PortfolioSpec> {
    let w = panel.window_slice(date, cfg.window)?;
    let cov = linalg::sample_covariance(w.asset_returns());
    let vols: Vec<f64> = (0..panel.n_assets()).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    match &cfg.portfolio.weights {
        None => PortfolioSpec::equal_weight(cfg.portfolio.value, vols),
        Some(map) => {
            let unknown: Vec<&String> = map.keys().filter(|k| !panel.asset_labels().contains(k)).collect();
            if !unknown.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "portfolio weights for unknown assets {unknown:?}"
                )));
            }
            let weights = panel
                .asset_labels()
                .iter()
                .map(|a| map.get(a).copied().unwrap_or(0.0))
                .collect();
            PortfolioSpec::new(weights, cfg.portfolio.value, vols)
        }
    }
}

pub fn reverse_config(cfg: &RunConfig) -> ReverseStressConfig {
    ReverseStressConfig {
        q: cfg.hdr_q,
        alpha: cfg.var_alpha,
        n_samples: cfg.mc_samples,
        seed: cfg.seed,
    }
}

pub struct ReverseStress {
    pub monte_carlo: StressResult,
    pub historical: StressResult,
    /// VaR under the mean of the fitted distribution.
    pub mean_scenario_var: f64,
}

pub fn reverse_stress(
    cfg: &RunConfig,
    nig: &NigParams,
    layout: &ParamLayout,
    history: &[CorrelationParams],
    assignment: &FactorAssignment,
    portfolio: &PortfolioSpec,
) -> Result<ReverseStress> {
    let rc = reverse_config(cfg);
    let monte_carlo = reverse_stress_mc(nig, layout, assignment, portfolio, &rc)?;
    let historical = reverse_stress_historical(history, nig, layout, assignment, portfolio, &rc)?;
    let mean = layout.embed(nig.mean().as_slice())?;
    let mean_scenario_var = var_from_variance(
        scenario_variance(&mean, assignment, portfolio)?,
        portfolio.value,
        cfg.var_alpha,
    )?;
    Ok(ReverseStress {
        monte_carlo,
        historical,
        mean_scenario_var,
    })
}

pub fn var_series(
    cfg: &RunConfig,
    inputs: &Inputs,
    assignments: &[(NaiveDate, FactorAssignment)],
    scenario: &CorrelationParams,
) -> Result<Vec<VarPoint>> {
    let last = *inputs.panel.dates().last().expect("panel is non-empty");
    let portfolio = portfolio_on(cfg, &inputs.panel, last)?;
    stressed_var_series(
        &inputs.panel,
        assignments,
        scenario,
        &portfolio,
        cfg.var_alpha,
        cfg.window,
    )
}

pub fn date_str(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn assignment_path(out: &Path, date: NaiveDate) -> PathBuf {
    out.join("assignments")
        .join(format!("assignment_{}.json", date_str(date)))
}

pub fn write_selection(out: &Path, rounds: &[SelectionRound]) -> Result<()> {
    let mut pips = String::from("date,asset,factor,pip,selected\n");
    for r in rounds {
        let a = &r.selection.assignment;
        write_text(&assignment_path(out, r.date), &(a.to_json()? + "\n"))?;
        for (i, res) in r.selection.results.iter().enumerate() {
            for (k, p) in res.pip.iter().enumerate() {
                pips.push_str(&format!(
                    "{},{},{},{:?},{}\n",
                    date_str(r.date),
                    a.asset_ids()[i],
                    a.factor_names()[k],
                    p,
                    u8::from(a.is_exposed(i, k))
                ));
            }
        }
    }
    write_text(&out.join("pips.csv"), &pips)
}

pub fn write_params(out: &Path, factor_names: &[String], params: &[CorrelationParams]) -> Result<()> {
    let mut buf = Vec::new();
    write_params_csv(&mut buf, factor_names, params)?;
    write_text(
        &out.join("params.csv"),
        &String::from_utf8(buf).expect("csv output is utf-8"),
    )
}

pub fn write_fit(out: &Path, fitted: &FittedDistribution) -> Result<()> {
    write_text(&out.join("nig_params.json"), &(fitted.nig.to_json()? + "\n"))?;
    write_json(&out.join("param_layout.json"), &fitted.layout)?;
    write_json(&out.join("fit_diagnostics.json"), &fitted.diagnostics)
}

pub fn write_var_series(out: &Path, points: &[VarPoint]) -> Result<()> {
    let mut buf = Vec::new();
    write_var_csv(&mut buf, points)?;
    write_text(
        &out.join("var_series.csv"),
        &String::from_utf8(buf).expect("csv output is utf-8"),
    )
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n_returns: usize,
    pub dropped_rows: usize,
    pub assets: Vec<String>,
    pub factors: Vec<String>,
    pub selection_dates: Vec<String>,
    pub n_calibrated: usize,
    pub skipped_calibrations: Vec<(String, String)>,
    pub thin_stride: usize,
    pub n_fit_samples: usize,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub stress_date: String,
    pub var_mc: f64,
    pub var_historical: f64,
    pub var_mean_scenario: f64,
    pub historical_scenario_date: Option<String>,
}

fn stage_marker(out: &Path, err: &StageError) {
    let text = format!(
        "stage: {}\nexit_code: {}\nerror: {}\n",
        err.stage,
        err.exit_code(),
        err.source
    );
    if let Err(e) = write_text(&out.join(FAILURE_MARKER), &text) {
        log::error!("could not write failure marker: {e}");
    }
}

/// Runs every stage and writes all artifacts under the output directory.
pub fn run(cfg: &RunConfig) -> StageResult<RunSummary> {
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(Error::from).at(Stage::Config)?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(Error::from).at(Stage::Config)?;
    }
    let result = run_stages(cfg, &out);
    if let Err(e) = &result {
        stage_marker(&out, e);
    }
    result
}

fn run_stages(cfg: &RunConfig, out: &Path) -> StageResult<RunSummary> {
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let factors = inputs.panel.factor_labels().to_vec();

    let rounds = select_factors(cfg, &inputs, None).at(Stage::SelectFactors)?;
    write_selection(out, &rounds).at(Stage::SelectFactors)?;
    let assignments = assignment_schedule(&rounds);

    let cal = calibrate_history(cfg, &inputs, &assignments, &inputs.schedule.calibration_dates).at(Stage::Calibrate)?;
    write_params(out, &factors, &cal.params).at(Stage::Calibrate)?;

    let fitted = fit_distribution(cfg, &factors, &cal.params).at(Stage::FitDist)?;
    write_fit(out, &fitted).at(Stage::FitDist)?;

    let stress_date = *inputs.schedule.calibration_dates.last().expect("schedule is non-empty");
    let assignment = assignment_on(&assignments, stress_date);
    let portfolio = portfolio_on(cfg, &inputs.panel, stress_date).at(Stage::ReverseStress)?;
    let rs = reverse_stress(cfg, &fitted.nig, &fitted.layout, &cal.params, assignment, &portfolio)
        .at(Stage::ReverseStress)?;
    write_json(&out.join("stress_mc.json"), &rs.monte_carlo).at(Stage::ReverseStress)?;
    write_json(&out.join("stress_historical.json"), &rs.historical).at(Stage::ReverseStress)?;

    let points = var_series(cfg, &inputs, &assignments, &rs.monte_carlo.beta_star).at(Stage::Var)?;
    write_var_series(out, &points).at(Stage::Var)?;

    report::write_plots(out).at(Stage::Report)?;

    let summary = RunSummary {
        seed: cfg.seed,
        n_returns: inputs.panel.n_obs(),
        dropped_rows: inputs.report.warning_count(),
        assets: inputs.panel.asset_labels().to_vec(),
        factors,
        selection_dates: rounds.iter().map(|r| date_str(r.date)).collect(),
        n_calibrated: cal.params.len(),
        skipped_calibrations: cal.skipped.iter().map(|(d, e)| (date_str(*d), e.clone())).collect(),
        thin_stride: fitted.stride,
        n_fit_samples: fitted.n_used,
        em_iterations: fitted.diagnostics.n_iter,
        em_converged: fitted.diagnostics.converged,
        stress_date: date_str(stress_date),
        var_mc: rs.monte_carlo.var_alpha,
        var_historical: rs.historical.var_alpha,
        var_mean_scenario: rs.mean_scenario_var,
        historical_scenario_date: rs.historical.beta_star.date.map(date_str),
    };
    write_json(&out.join("run_summary.json"), &summary).at(Stage::Report)?;
    Ok(summary)
}
