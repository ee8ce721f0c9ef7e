use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use corrstress::corrmodel::{
    read_params_csv, valid_model_correlation, CorrelationParams, FactorAssignment, DATE_FORMAT,
};
use corrstress::distfit::NigParams;
use corrstress::stress::{portfolio_variance, var_from_variance, ParamLayout, ScenarioFile, StressResult, VarPoint};
use corrstress::{Error, Result};

use crate::config::RunConfig;
use crate::pipeline::{
    assignment_on, calibrate_history, date_str, fit_distribution, ingest, portfolio_on, reverse_stress, select_factors,
    var_series, write_fit, write_json, write_params, write_selection, write_text, write_var_series, AtStage, Inputs,
    Stage, StageResult,
};
use crate::report;

fn read_artifact(path: &Path, hint: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e} (run `{hint}` first)", path.display()),
        ))
    })
}

/// Factor assignments written by `select-factors`, in date order.
pub fn load_assignments(out: &Path) -> Result<Vec<(NaiveDate, FactorAssignment)>> {
    let dir = out.join("assignments");
    let entries = fs::read_dir(&dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e} (run `select-factors` first)", dir.display()),
        ))
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some(date) = stem
            .strip_prefix("assignment_")
            .and_then(|d| NaiveDate::parse_from_str(d, DATE_FORMAT).ok())
        else {
            continue;
        };
        out.push((
            date,
            FactorAssignment::from_json(&read_artifact(&f, "select-factors")?)?,
        ));
    }
    if out.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no assignment files in {} (run `select-factors` first)", dir.display()),
        )));
    }
    Ok(out)
}

pub fn load_params(out: &Path) -> Result<(Vec<String>, Vec<CorrelationParams>)> {
    let (factors, params) = read_params_csv(read_artifact(&out.join("params.csv"), "calibrate")?.as_bytes())?;
    if params.is_empty() {
        return Err(Error::InvalidInput("params.csv has no rows".into()));
    }
    Ok((factors, params))
}

pub fn load_fit(out: &Path) -> Result<(NigParams, ParamLayout)> {
    let nig = NigParams::from_json(&read_artifact(&out.join("nig_params.json"), "fit-dist")?)?;
    let layout: ParamLayout = serde_json::from_str(&read_artifact(&out.join("param_layout.json"), "fit-dist")?)?;
    Ok((nig, layout))
}

fn check_factors(expected: &[String], found: &[String], what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::InvalidInput(format!(
            "{what} factors {found:?} differ from the loaded factors {expected:?}"
        )));
    }
    Ok(())
}

/// Row of `params` dated `date`, or the last row.
fn params_on(params: &[CorrelationParams], date: Option<NaiveDate>) -> Result<&CorrelationParams> {
    match date {
        None => Ok(params.last().expect("checked non-empty")),
        Some(d) => params.iter().find(|p| p.date == Some(d)).ok_or_else(|| {
            let first = params.first().and_then(|p| p.date).map(date_str).unwrap_or_default();
            let last = params.last().and_then(|p| p.date).map(date_str).unwrap_or_default();
            Error::InvalidInput(format!(
                "no calibrated coefficients on {d} (available {first} to {last})"
            ))
        }),
    }
}

fn check_in_panel(inputs: &Inputs, date: NaiveDate) -> Result<()> {
    if !inputs.schedule.calibration_dates.contains(&date) {
        let c = &inputs.schedule.calibration_dates;
        return Err(Error::InvalidInput(format!(
            "{date} is not a calibration date (available {} to {})",
            date_str(c[0]),
            date_str(*c.last().expect("schedule is non-empty"))
        )));
    }
    Ok(())
}

pub fn select_factors_cmd(cfg: &RunConfig, date: Option<NaiveDate>) -> StageResult<()> {
    let stage = Stage::SelectFactors;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let rounds = select_factors(cfg, &inputs, date).at(stage)?;
    write_selection(&cfg.output_dir, &rounds).at(stage)?;
    for r in &rounds {
        let a = &r.selection.assignment;
        let exposed: usize = (0..a.n_assets())
            .map(|i| (0..a.n_factors()).filter(|&k| a.is_exposed(i, k)).count())
            .sum();
        println!(
            "{}: {} exposures over {} assets",
            date_str(r.date),
            exposed,
            a.n_assets()
        );
    }
    Ok(())
}

pub fn calibrate_cmd(cfg: &RunConfig, date: Option<NaiveDate>) -> StageResult<()> {
    let stage = Stage::Calibrate;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let assignments = load_assignments(&cfg.output_dir).at(stage)?;
    check_factors(
        inputs.panel.factor_labels(),
        assignments[0].1.factor_names(),
        "assignment",
    )
    .at(stage)?;
    let factors = inputs.panel.factor_labels().to_vec();
    match date {
        Some(d) => {
            check_in_panel(&inputs, d).at(stage)?;
            let cal = calibrate_history(cfg, &inputs, &assignments, &[d]).at(stage)?;
            let path = cfg.output_dir.join(format!("params_{}.csv", date_str(d)));
            let mut buf = Vec::new();
            corrstress::corrmodel::write_params_csv(&mut buf, &factors, &cal.params).at(stage)?;
            let text = String::from_utf8(buf).expect("csv output is utf-8");
            write_text(&path, &text).at(stage)?;
            print!("{text}");
        }
        None => {
            let cal = calibrate_history(cfg, &inputs, &assignments, &inputs.schedule.calibration_dates).at(stage)?;
            write_params(&cfg.output_dir, &factors, &cal.params).at(stage)?;
            println!("calibrated {} dates, skipped {}", cal.params.len(), cal.skipped.len());
        }
    }
    Ok(())
}

pub fn fit_dist_cmd(cfg: &RunConfig) -> StageResult<()> {
    let stage = Stage::FitDist;
    let (factors, params) = load_params(&cfg.output_dir).at(stage)?;
    let fitted = fit_distribution(cfg, &factors, &params).at(stage)?;
    write_fit(&cfg.output_dir, &fitted).at(stage)?;
    println!(
        "fitted {} coordinates to {} rows (stride {}) in {} iterations, converged: {}",
        fitted.layout.dim(),
        fitted.n_used,
        fitted.stride,
        fitted.diagnostics.n_iter,
        fitted.diagnostics.converged
    );
    for (label, p) in fitted.nig.labels().iter().zip(&fitted.diagnostics.ks_pvalues) {
        println!("  KS p-value {label}: {p:.4}");
    }
    Ok(())
}

pub fn reverse_stress_cmd(cfg: &RunConfig, date: Option<NaiveDate>) -> StageResult<()> {
    let stage = Stage::ReverseStress;
    let out = &cfg.output_dir;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let (factors, params) = load_params(out).at(stage)?;
    check_factors(inputs.panel.factor_labels(), &factors, "params.csv").at(stage)?;
    let (nig, layout) = load_fit(out).at(stage)?;
    let assignments = load_assignments(out).at(stage)?;
    let when = params_on(&params, date)
        .at(stage)?
        .date
        .expect("calibrated rows are dated");
    let portfolio = portfolio_on(cfg, &inputs.panel, when).at(stage)?;
    let rs = reverse_stress(
        cfg,
        &nig,
        &layout,
        &params,
        assignment_on(&assignments, when),
        &portfolio,
    )
    .at(stage)?;
    write_json(&out.join("stress_mc.json"), &rs.monte_carlo).at(stage)?;
    write_json(&out.join("stress_historical.json"), &rs.historical).at(stage)?;
    println!("stress date {}", date_str(when));
    for r in [&rs.monte_carlo, &rs.historical] {
        print_stress(r);
    }
    println!("  mean scenario VaR {:.2}", rs.mean_scenario_var);
    Ok(())
}

fn print_stress(r: &StressResult) {
    println!(
        "  {:?}: VaR {:.2}, variance {:.6e}, {} of {} scenarios in region",
        r.method, r.var_alpha, r.variance, r.n_in_region, r.n_scenarios
    );
}

fn load_scenarios(path: &Path) -> Result<ScenarioFile> {
    let f = fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    ScenarioFile::read(f)
}

pub fn var_cmd(cfg: &RunConfig, date: Option<NaiveDate>, scenario: Option<&Path>) -> StageResult<()> {
    let stage = Stage::Var;
    let out = &cfg.output_dir;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let assignments = load_assignments(out).at(stage)?;
    let beta = match scenario {
        Some(path) => {
            let (factors, params) = load_params(out).at(stage)?;
            check_factors(inputs.panel.factor_labels(), &factors, "params.csv").at(stage)?;
            let file = load_scenarios(path).at(stage)?;
            let mut resolved = file.resolve(params_on(&params, date).at(stage)?, &factors).at(stage)?;
            if resolved.len() > 1 {
                log::warn!("scenario file has {} rows; using '{}'", resolved.len(), resolved[0].0);
            }
            resolved.swap_remove(0).1
        }
        None => {
            let text = read_artifact(&out.join("stress_mc.json"), "reverse-stress").at(stage)?;
            StressResult::from_json(&text).at(stage)?.beta_star
        }
    };
    let points = var_series(cfg, &inputs, &assignments, &beta).at(stage)?;
    match date {
        None => {
            write_var_series(out, &points).at(stage)?;
            println!("wrote {} VaR points", points.len());
        }
        Some(d) => {
            let p: Vec<VarPoint> = points.into_iter().filter(|p| p.date == d).collect();
            if p.is_empty() {
                return Err(Error::InvalidInput(format!("no VaR evaluation on {d}"))).at(stage);
            }
            let mut buf = Vec::new();
            corrstress::stress::write_var_csv(&mut buf, &p).at(stage)?;
            let text = String::from_utf8(buf).expect("csv output is utf-8");
            write_text(&out.join(format!("var_{}.csv", date_str(d))), &text).at(stage)?;
            print!("{text}");
        }
    }
    Ok(())
}

/// One row of `stress_report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressRow {
    pub label: String,
    pub date: NaiveDate,
    pub var_baseline: f64,
    pub var_stressed: f64,
}

impl StressRow {
    pub fn delta_var(&self) -> f64 {
        self.var_stressed - self.var_baseline
    }
}

pub fn stress_cmd(cfg: &RunConfig, scenario: &Path, date: Option<NaiveDate>) -> StageResult<Vec<StressRow>> {
    let stage = Stage::Stress;
    let out = &cfg.output_dir;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let (factors, params) = load_params(out).at(stage)?;
    check_factors(inputs.panel.factor_labels(), &factors, "params.csv").at(stage)?;
    let assignments = load_assignments(out).at(stage)?;
    let baseline = params_on(&params, date).at(stage)?;
    let when = baseline.date.expect("calibrated rows are dated");
    let assignment = assignment_on(&assignments, when);
    let portfolio = portfolio_on(cfg, &inputs.panel, when).at(stage)?;
    let var_of = |p: &CorrelationParams| -> Result<f64> {
        let corr = valid_model_correlation(p, assignment)?;
        var_from_variance(portfolio_variance(&portfolio, &corr)?, portfolio.value, cfg.var_alpha)
    };
    let var_baseline = var_of(baseline).at(stage)?;
    let scenarios = load_scenarios(scenario)
        .at(stage)?
        .resolve(baseline, &factors)
        .at(stage)?;
    let mut rows = Vec::with_capacity(scenarios.len());
    let mut text = String::from("label,date,var_baseline,var_stressed,delta_var\n");
    for (label, p) in scenarios {
        let row = StressRow {
            label,
            date: when,
            var_baseline,
            var_stressed: var_of(&p).at(stage)?,
        };
        text.push_str(&format!(
            "{},{},{:?},{:?},{:?}\n",
            row.label,
            date_str(row.date),
            row.var_baseline,
            row.var_stressed,
            row.delta_var()
        ));
        rows.push(row);
    }
    write_text(&out.join("stress_report.csv"), &text).at(stage)?;
    print!("{text}");
    Ok(rows)
}

pub fn report_cmd(cfg: &RunConfig) -> StageResult<()> {
    report::write_plots(&cfg.output_dir).at(Stage::Report)?;
    println!("plots written to {}", cfg.output_dir.join("plots").display());
    Ok(())
}

pub fn run_cmd(cfg: &RunConfig) -> StageResult<()> {
    let s = crate::pipeline::run(cfg)?;
    println!("stress date {}", s.stress_date);
    println!("  VaR (Monte Carlo scenario)  {:.2}", s.var_mc);
    println!("  VaR (historical scenario)   {:.2}", s.var_historical);
    println!("  VaR (mean scenario)         {:.2}", s.var_mean_scenario);
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}
