use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use corrstress::ingest::{DEFAULT_SELECTION_WINDOW, DEFAULT_WINDOW, MIN_WINDOW};
use corrstress::stress::{DEFAULT_ALPHA, DEFAULT_MC_SAMPLES, DEFAULT_Q};
use corrstress::{Error, Result};

fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_selection_window() -> usize {
    DEFAULT_SELECTION_WINDOW
}
fn default_target_size() -> f64 {
    6.0
}
fn default_q() -> f64 {
    DEFAULT_Q
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}
fn default_mcmc_iterations() -> usize {
    50_000
}
fn default_em_tol() -> f64 {
    1e-10
}
fn default_em_max_iter() -> usize {
    1000
}
fn default_value() -> f64 {
    1_000_000.0
}

/// Portfolio weights by asset label (equal weights when omitted) and value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default = "default_value")]
    pub value: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            weights: None,
            value: default_value(),
        }
    }
}

/// Pipeline configuration. Relative paths are resolved against the directory
/// of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prices: PathBuf,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_selection_window")]
    pub selection_window: usize,
    #[serde(default = "default_target_size")]
    pub target_model_size: f64,
    #[serde(default = "default_q")]
    pub hdr_q: f64,
    #[serde(default = "default_alpha")]
    pub var_alpha: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Stride for thinning the coefficient history before fitting; by default
    /// 10 for histories longer than 2000 days and 1 otherwise.
    #[serde(default)]
    pub thin_stride: Option<usize>,
    #[serde(default = "default_mcmc_iterations")]
    pub mcmc_iterations: usize,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    #[serde(default = "default_em_max_iter")]
    pub em_max_iter: usize,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub window: Option<usize>,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    /// Reads, resolves paths, applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.prices = resolve(base, &cfg.prices);
        cfg.manifest = resolve(base, &cfg.manifest);
        cfg.output_dir = resolve(base, &cfg.output_dir);
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = overrides.window {
            cfg.window = w;
        }
        if let Some(q) = overrides.q {
            cfg.hdr_q = q;
        }
        if let Some(a) = overrides.alpha {
            cfg.var_alpha = a;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.window < MIN_WINDOW {
            return bad(format!("window {} is below {MIN_WINDOW}", self.window));
        }
        if self.selection_window == 0 || self.selection_window > self.window {
            return bad(format!("selection_window must be in 1..={}", self.window));
        }
        if !(self.target_model_size > 0.0) {
            return bad("target_model_size must be positive".into());
        }
        if !(self.hdr_q > 0.0 && self.hdr_q < 1.0) {
            return bad(format!("hdr_q = {} outside (0, 1)", self.hdr_q));
        }
        if !(self.var_alpha > 0.5 && self.var_alpha < 1.0) {
            return bad(format!("var_alpha = {} outside (0.5, 1)", self.var_alpha));
        }
        if self.mc_samples < 100 {
            return bad("mc_samples must be at least 100".into());
        }
        if self.thin_stride == Some(0) {
            return bad("thin_stride must be at least 1".into());
        }
        if self.mcmc_iterations < 10 {
            return bad("mcmc_iterations must be at least 10".into());
        }
        if !(self.em_tol > 0.0) || self.em_max_iter == 0 {
            return bad("em_tol must be positive and em_max_iter at least 1".into());
        }
        if !(self.portfolio.value.is_finite() && self.portfolio.value > 0.0) {
            return bad("portfolio value must be positive".into());
        }
        Ok(())
    }

    pub fn thin_stride_for(&self, history_len: usize) -> usize {
        self.thin_stride.unwrap_or(if history_len > 2000 { 10 } else { 1 })
    }
}
