use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use corrstress_cli::commands;
use corrstress_cli::config::{Overrides, RunConfig};
use corrstress_cli::pipeline::{AtStage, Stage, StageResult};

#[derive(Parser)]
#[command(name = "corrstress", version, about = "Factor-driven correlation stress testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all artifacts.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Bayesian factor selection for each quarter up to --date.
    SelectFactors {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_date)]
        date: Option<NaiveDate>,
    },
    /// Calibrate coefficients for every date, or only --date.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_date)]
        date: Option<NaiveDate>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Fit the NIG distribution to the coefficient history.
    FitDist {
        #[command(flatten)]
        common: Common,
    },
    /// Baseline and stressed VaR series, or one date with --date.
    Var {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_date)]
        date: Option<NaiveDate>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        /// Scenario file; defaults to the Monte Carlo reverse stress scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// VaR change under the scenarios in a file.
    Stress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_date)]
        date: Option<NaiveDate>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Worst-variance scenario inside the highest-density region.
    ReverseStress {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_date)]
        date: Option<NaiveDate>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Render SVG plots from existing artifacts.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("expected YYYY-MM-DD: {e}"))
}

fn load(common: &Common, window: Option<usize>, q: Option<f64>, alpha: Option<f64>) -> StageResult<RunConfig> {
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        window,
        q,
        alpha,
    };
    RunConfig::load(&common.config, &overrides).at(Stage::Config)
}

fn dispatch(cmd: Command) -> StageResult<()> {
    match cmd {
        Command::Run { common } => commands::run_cmd(&load(&common, None, None, None)?),
        Command::SelectFactors { common, date } => {
            commands::select_factors_cmd(&load(&common, None, None, None)?, date)
        }
        Command::Calibrate { common, date, window } => {
            commands::calibrate_cmd(&load(&common, window, None, None)?, date)
        }
        Command::FitDist { common } => commands::fit_dist_cmd(&load(&common, None, None, None)?),
        Command::Var {
            common,
            date,
            alpha,
            window,
            scenario,
        } => commands::var_cmd(&load(&common, window, None, alpha)?, date, scenario.as_deref()),
        Command::Stress {
            common,
            scenario,
            date,
            alpha,
        } => commands::stress_cmd(&load(&common, None, None, alpha)?, &scenario, date).map(|_| ()),
        Command::ReverseStress { common, date, q, alpha } => {
            commands::reverse_stress_cmd(&load(&common, None, q, alpha)?, date)
        }
        Command::Report { common } => commands::report_cmd(&load(&common, None, None, None)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
