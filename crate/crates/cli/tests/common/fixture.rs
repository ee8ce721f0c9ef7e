//! Synthetic two-factor price panel with time-varying loadings.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEFAULT_SEED: u64 = 1;

pub const ASSETS: [&str; 6] = ["A1", "A2", "A3", "A4", "A5", "A6"];
pub const FACTORS: [&str; 2] = ["F1", "F2"];
/// Factor exposures of each asset.
pub const EXPOSURES: [[bool; 2]; 6] = [
    [true, false],
    [true, false],
    [false, true],
    [false, true],
    [true, true],
    [true, true],
];

pub struct Fixture {
    pub dates: Vec<NaiveDate>,
    /// Prices in the column order of [`ASSETS`] followed by [`FACTORS`].
    pub prices: Vec<Vec<f64>>,
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Forward simulation of `n_days` prices.
pub fn simulate(n_days: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = business_days(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), n_days);
    let n_cols = ASSETS.len() + FACTORS.len();
    let mut level = vec![100.0_f64; n_cols];
    let mut prices = vec![level.clone()];
    for t in 1..n_days {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / 320.0;
        let calm = if (550..680).contains(&t) { 2.0 } else { 1.0 };
        let f: Vec<f64> = (0..FACTORS.len())
            .map(|_| 0.01 * calm * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let loading = [1.0 + 0.6 * phase.sin(), 1.0 + 0.5 * phase.cos()];
        let mut r = Vec::with_capacity(n_cols);
        for exp in EXPOSURES {
            let systematic: f64 = (0..FACTORS.len()).filter(|&k| exp[k]).map(|k| loading[k] * f[k]).sum();
            let e: f64 = StandardNormal.sample(&mut rng);
            r.push(systematic + 0.009 * e);
        }
        r.extend(&f);
        for (p, x) in level.iter_mut().zip(&r) {
            *p *= x.exp();
        }
        prices.push(level.clone());
    }
    Fixture { dates, prices }
}

impl Fixture {
    pub fn prices_csv(&self) -> String {
        let mut s = String::from("date");
        for c in ASSETS.iter().chain(FACTORS.iter()) {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (d, row) in self.dates.iter().zip(&self.prices) {
            let _ = write!(s, "{}", d.format("%Y-%m-%d"));
            for p in row {
                let _ = write!(s, ",{p:.6}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn manifest_json() -> String {
    let columns: Vec<String> = ASSETS
        .iter()
        .map(|a| format!("    \"{a}\": \"asset\""))
        .chain(FACTORS.iter().map(|f| format!("    \"{f}\": \"factor\"")))
        .collect();
    let forced: Vec<String> = ASSETS
        .iter()
        .zip(EXPOSURES)
        .map(|(a, e)| {
            let names: Vec<String> = (0..FACTORS.len())
                .filter(|&k| e[k])
                .map(|k| format!("\"{}\"", FACTORS[k]))
                .collect();
            format!("    \"{a}\": [{}]", names.join(", "))
        })
        .collect();
    format!(
        "{{\n  \"columns\": {{\n{}\n  }},\n  \"forced\": {{\n{}\n  }}\n}}\n",
        columns.join(",\n"),
        forced.join(",\n")
    )
}

pub fn config_json(output_dir: &str, seed: u64) -> String {
    format!(
        r#"{{
  "prices": "prices.csv",
  "manifest": "manifest.json",
  "output_dir": "{output_dir}",
  "seed": {seed},
  "window": 250,
  "selection_window": 63,
  "target_model_size": 0.5,
  "hdr_q": 0.05,
  "var_alpha": 0.99,
  "mc_samples": 100000,
  "mcmc_iterations": 20000
}}
"#
    )
}

/// Writes prices.csv, manifest.json and config.json into `dir`.
pub fn write_fixture(dir: &Path, n_days: usize, seed: u64, output_dir: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("prices.csv"), simulate(n_days, seed).prices_csv())?;
    std::fs::write(dir.join("manifest.json"), manifest_json())?;
    std::fs::write(dir.join("config.json"), config_json(output_dir, seed))?;
    Ok(())
}
