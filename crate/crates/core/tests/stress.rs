use chrono::{Days, NaiveDate};
use corrstress::corrmodel::{calibrate, CorrelationMatrix, CorrelationParams, FactorAssignment, MatrixSource};
use corrstress::distfit::{sample_nig, NigParams};
use corrstress::ingest::ReturnPanel;
use corrstress::stress::{
    argmax_variance, expected_shortfall_gaussian, hdr_threshold, hdr_threshold_log, mahalanobis,
    reverse_stress_historical, reverse_stress_mc, scenario_variance, stressed_var_series, var_gaussian, ParamLayout,
    PortfolioSpec, ReverseStressConfig, StressMethod,
};
use corrstress::{linalg, rng};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

fn equicorrelation(p: usize, c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { c })
}

/// Rows of `N(0, diag(vol) C diag(vol))`.
fn gaussian_rows(corr: &DMatrix<f64>, vol: f64, n: usize, seed: u64) -> DMatrix<f64> {
    let p = corr.nrows();
    let l = linalg::cholesky(corr, "test").unwrap().l();
    let mut r = rng::stream(seed, 0, 0);
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut r));
        let x = &l * z;
        for k in 0..p {
            out[(i, k)] = vol * x[k];
        }
    }
    out
}

fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    (0..n).map(|i| start + Days::new(i as u64)).collect()
}

fn panel_from(assets: DMatrix<f64>) -> ReturnPanel {
    let n = assets.nrows();
    let p = assets.ncols();
    let factors = DMatrix::from_fn(n, 1, |i, _| assets.row(i).sum());
    ReturnPanel::new(
        dates(n),
        assets,
        factors,
        (0..p).map(|i| format!("A{i}")).collect(),
        vec!["F0".into()],
    )
    .unwrap()
}

fn one_factor(p: usize) -> FactorAssignment {
    FactorAssignment::from_rows(vec![vec![true]; p]).unwrap()
}

fn ks_pvalue(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    corrstress::special::kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d)
}

#[test]
fn standard_normal_hdr_threshold() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut r = rng::stream(1, 0, 0);
    let dens: Vec<f64> = (0..1_000_000)
        .map(|_| normal.pdf(StandardNormal.sample(&mut r)))
        .collect();
    let region = hdr_threshold(&dens, 0.05).unwrap();
    let expected = normal.pdf(1.959964);
    assert!((region.f_q - expected).abs() < 0.002, "{} vs {expected}", region.f_q);
    assert_eq!(region.n_samples_used, 1_000_000);
}

#[test]
fn squared_mahalanobis_is_chi_squared() {
    for (n, seed) in [(2usize, 1u64), (5, 2), (10, 3)] {
        let sigma = DMatrix::from_fn(n, n, |i, j| {
            0.5f64.powi((i as i32 - j as i32).abs()) * (1.0 + 0.1 * i as f64).min(1.0 + 0.1 * j as f64)
        });
        let sigma = linalg::symmetrize(&sigma);
        let mu: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let l = linalg::cholesky(&sigma, "test").unwrap().l();
        let mut r = rng::stream(seed, 0, 0);
        let d2: Vec<f64> = (0..100_000)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
                let x: Vec<f64> = (&l * z).iter().zip(&mu).map(|(a, b)| a + b).collect();
                mahalanobis(&x, &mu, &sigma).unwrap().powi(2)
            })
            .collect();
        let chi2 = ChiSquared::new(n as f64).unwrap();
        let p = ks_pvalue(d2, |v| chi2.cdf(v));
        assert!(p > 0.01, "n = {n}: p = {p}");
    }
}

#[test]
fn hdr_coverage_on_fresh_samples() {
    let p = NigParams::new(
        1.0,
        1.0,
        DVector::from_vec(vec![0.1, 0.0, -0.1, 0.2, 0.0]),
        linalg::symmetrize(&DMatrix::from_fn(5, 5, |i, j| 0.3f64.powi((i as i32 - j as i32).abs()))),
        DVector::from_vec(vec![0.1, -0.1, 0.05, 0.0, 0.2]),
    )
    .unwrap();
    let dens = p.density();
    let ln = |x: &DMatrix<f64>| -> Vec<f64> {
        (0..x.nrows())
            .map(|i| dens.log_density(&x.row(i).iter().copied().collect::<Vec<_>>()))
            .collect()
    };
    let region = hdr_threshold_log(&ln(&sample_nig(&p, 100_000, &mut rng::stream(1, 3, 0))), 0.05).unwrap();
    let fresh = ln(&sample_nig(&p, 100_000, &mut rng::stream(2, 3, 0)));
    let rate = fresh.iter().filter(|&&l| region.contains_log(l)).count() as f64 / fresh.len() as f64;
    assert!((rate - 0.95).abs() <= 0.01, "coverage {rate}");
}

/// Two assets in F0, one in F1; only `eta` and `nu_F0` vary.
fn grid_setup() -> (FactorAssignment, ParamLayout, PortfolioSpec) {
    let a = FactorAssignment::from_rows(vec![vec![true, false], vec![true, false], vec![false, true]]).unwrap();
    let layout = ParamLayout {
        n_factors: 2,
        active: vec![0, 3],
        fixed: vec![(1, 0.0), (2, 0.0), (4, 0.0)],
        eta_omitted: false,
    };
    let pf = PortfolioSpec::equal_weight(1_000.0, vec![0.01, 0.012, 0.02]).unwrap();
    (a, layout, pf)
}

#[test]
fn point_mass_distribution_returns_its_location() {
    let (a, layout, pf) = grid_setup();
    let mu = DVector::from_vec(vec![0.2, 0.3]);
    let dist = NigParams::new(1e4, 1e4, mu.clone(), DMatrix::identity(2, 2) * 1e-12, DVector::zeros(2)).unwrap();
    let cfg = ReverseStressConfig {
        n_samples: 2_000,
        ..Default::default()
    };
    let r = reverse_stress_mc(&dist, &layout, &a, &pf, &cfg).unwrap();
    assert!((r.beta_star.eta.unwrap() - 0.2).abs() < 1e-4);
    assert!((r.beta_star.nu[0] - 0.3).abs() < 1e-4);
    assert!(r.in_region && r.ln_density >= r.ln_f_q);
    assert_eq!(r.method, StressMethod::MonteCarlo);
}

#[test]
fn mc_argmax_matches_grid_search() {
    let (a, layout, pf) = grid_setup();
    let sigma = DMatrix::from_row_slice(2, 2, &[0.01, 0.002, 0.002, 0.006]);
    let dist = NigParams::new(
        200.0,
        200.0,
        DVector::from_vec(vec![0.2, 0.3]),
        sigma,
        DVector::zeros(2),
    )
    .unwrap();
    let cfg = ReverseStressConfig {
        n_samples: 100_000,
        seed: 3,
        ..Default::default()
    };
    let r = reverse_stress_mc(&dist, &layout, &a, &pf, &cfg).unwrap();
    // grid over the 99% box, restricted to the same density threshold
    let dens = dist.density();
    let sd = [0.1, 0.006f64.sqrt()];
    let m = 400;
    let mut best = (f64::NEG_INFINITY, [0.0; 2]);
    for i in 0..=m {
        for j in 0..=m {
            let x = [
                0.2 + sd[0] * 3.0 * (2.0 * i as f64 / m as f64 - 1.0),
                0.3 + sd[1] * 3.0 * (2.0 * j as f64 / m as f64 - 1.0),
            ];
            if dens.log_density(&x) >= r.ln_f_q {
                let v = scenario_variance(&layout.embed(&x).unwrap(), &a, &pf).unwrap();
                if v > best.0 {
                    best = (v, x);
                }
            }
        }
    }
    assert!(
        (r.variance - best.0).abs() <= 2e-3 * best.0,
        "{} vs {}",
        r.variance,
        best.0
    );
    let star = [r.beta_star.eta.unwrap(), r.beta_star.nu[0]];
    assert!(star[0] > 0.2 && star[1] > 0.3, "upper-right direction");
    let cell = 6.0 * sd[0] / m as f64;
    let dist_to_grid = ((star[0] - best.1[0]).powi(2) + (star[1] - best.1[1]).powi(2)).sqrt();
    assert!(dist_to_grid < 0.05, "distance {dist_to_grid}, cell {cell}");
}

#[test]
fn mc_var_grows_with_sample_size_in_median() {
    let (a, layout, pf) = grid_setup();
    let sigma = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.006]);
    let dist = NigParams::new(
        2.0,
        2.0,
        DVector::from_vec(vec![0.2, 0.3]),
        sigma,
        DVector::from_vec(vec![0.02, 0.0]),
    )
    .unwrap();
    let median = |n: usize| {
        let mut v: Vec<f64> = (0..5)
            .map(|seed| {
                let cfg = ReverseStressConfig {
                    n_samples: n,
                    seed,
                    ..Default::default()
                };
                reverse_stress_mc(&dist, &layout, &a, &pf, &cfg).unwrap().var_alpha
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v[2]
    };
    assert!(median(100_000) >= median(1_000));
}

#[test]
fn historical_selects_dominant_in_region_date() {
    let (a, layout, pf) = grid_setup();
    let sigma = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.01]);
    let dist = NigParams::new(50.0, 50.0, DVector::from_vec(vec![0.2, 0.3]), sigma, DVector::zeros(2)).unwrap();
    let cfg = ReverseStressConfig {
        n_samples: 20_000,
        seed: 1,
        ..Default::default()
    };
    let mk = |e: f64, n: f64| layout.embed(&[e, n]).unwrap();
    // one far outlier (outside the region) and one in-region high point
    let history = vec![mk(0.2, 0.3), mk(0.25, 0.35), mk(0.9, 0.9), mk(0.3, 0.38), mk(0.1, 0.2)];
    let r = reverse_stress_historical(&history, &dist, &layout, &a, &pf, &cfg).unwrap();
    let dens = dist.density();
    let oracle = (0..history.len())
        .filter(|&i| dens.log_density(&layout.project(&history[i]).unwrap()) >= r.ln_f_q)
        .max_by(|&i, &j| {
            let vi = scenario_variance(&history[i], &a, &pf).unwrap();
            let vj = scenario_variance(&history[j], &a, &pf).unwrap();
            vi.total_cmp(&vj).then(j.cmp(&i))
        })
        .unwrap();
    assert_eq!(r.scenario_index, oracle);
    assert_eq!(r.scenario_index, 3);
    assert_eq!(r.n_in_region, 4);
    assert_eq!(r.method, StressMethod::Historical);

    let single = reverse_stress_historical(&history[..1], &dist, &layout, &a, &pf, &cfg).unwrap();
    assert_eq!(single.beta_star, history[0]);

    let outside = reverse_stress_historical(&history[2..3], &dist, &layout, &a, &pf, &cfg).unwrap_err();
    assert!(outside.to_string().contains("increase q"));
}

#[test]
fn var_es_and_variance_share_argmax() {
    let (a, layout, pf) = grid_setup();
    let mut r = rng::stream(9, 0, 0);
    let scenarios: Vec<CorrelationParams> = (0..300)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut r);
            let n: f64 = StandardNormal.sample(&mut r);
            layout.embed(&[0.3 * e, 0.3 * n]).unwrap()
        })
        .collect();
    let corr: Vec<CorrelationMatrix> = scenarios
        .iter()
        .map(|s| corrstress::corrmodel::valid_model_correlation(s, &a).unwrap())
        .collect();
    let all = vec![true; scenarios.len()];
    let var_idx = |alpha: f64| {
        let v: Vec<f64> = corr.iter().map(|c| var_gaussian(&pf, c, alpha).unwrap()).collect();
        argmax_variance(&v, &all)
    };
    let es: Vec<f64> = corr
        .iter()
        .map(|c| expected_shortfall_gaussian(&pf, c, 0.975).unwrap())
        .collect();
    let var: Vec<f64> = scenarios
        .iter()
        .map(|s| scenario_variance(s, &a, &pf).unwrap())
        .collect();
    let reference = argmax_variance(&var, &all);
    assert_eq!(var_idx(0.95), reference);
    assert_eq!(var_idx(0.99), reference);
    assert_eq!(argmax_variance(&es, &all), reference);
}

#[test]
fn comonotone_scenario_gives_weighted_vol_bound() {
    let p = 4;
    let x = gaussian_rows(&equicorrelation(p, 0.3), 0.01, 400, 5);
    let panel = panel_from(x);
    let a = one_factor(p);
    let scenario = CorrelationParams::new(Some(25.0), vec![0.0], vec![0.0]).unwrap();
    let pf = PortfolioSpec::new(vec![0.1, 0.2, 0.3, 0.4], 100.0, vec![0.0; p]).unwrap();
    let start = panel.dates()[0];
    let series = stressed_var_series(&panel, &[(start, a)], &scenario, &pf, 0.99, 250).unwrap();
    assert_eq!(series.len(), 150);
    assert_eq!(series[0].date, panel.dates()[250]);
    let z = -Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.01);
    for (k, pt) in series.iter().enumerate() {
        let t = 250 + k;
        let r = panel.asset_returns().rows(t - 250, 250).into_owned();
        let cov = linalg::sample_covariance(&r);
        let bound: f64 = (0..p).map(|i| pf.weights[i] * cov[(i, i)].sqrt()).sum::<f64>() * z * 100.0;
        assert!((pt.stressed_var - bound).abs() < 1e-9 * bound);
        assert!(pt.stressed_var >= pt.var);
    }
}

#[test]
fn self_scenario_matches_baseline() {
    let p = 5;
    let panel = panel_from(gaussian_rows(&equicorrelation(p, 0.4), 0.01, 300, 6));
    let a = one_factor(p);
    let t = panel.n_obs() - 1;
    let window = panel.asset_returns().rows(t - 250, 250).into_owned();
    let emp = CorrelationMatrix::new(
        linalg::correlation_of_columns(&window).unwrap(),
        MatrixSource::Empirical,
    )
    .unwrap();
    let fit = calibrate(&emp, &a).unwrap();
    let pf = PortfolioSpec::equal_weight(1.0, vec![0.0; p]).unwrap();
    let series = stressed_var_series(&panel, &[(panel.dates()[0], a)], &fit.params, &pf, 0.99, 250).unwrap();
    let last = series.last().unwrap();
    assert_eq!(last.date, panel.dates()[t]);
    assert!((last.stressed_var - last.var).abs() < 0.03 * last.var);
}

#[test]
fn gap_shrinks_in_high_correlation_regime() {
    let p = 4;
    let calm = gaussian_rows(&equicorrelation(p, 0.1), 0.01, 500, 7);
    let stressed = gaussian_rows(&equicorrelation(p, 0.75), 0.01, 500, 8);
    let mut x = DMatrix::zeros(1000, p);
    x.rows_mut(0, 500).copy_from(&calm);
    x.rows_mut(500, 500).copy_from(&stressed);
    let panel = panel_from(x);
    let scenario = CorrelationParams::new(Some(0.85f64.atanh()), vec![0.0], vec![0.0]).unwrap();
    let pf = PortfolioSpec::equal_weight(1.0, vec![0.0; p]).unwrap();
    let s = stressed_var_series(&panel, &[(panel.dates()[0], one_factor(p))], &scenario, &pf, 0.99, 250).unwrap();
    let gap = |range: std::ops::Range<usize>| {
        let g: Vec<f64> = range.map(|t| s[t - 250].stressed_var - s[t - 250].var).collect();
        g.iter().sum::<f64>() / g.len() as f64
    };
    let calm_gap = gap(250..500);
    let high_gap = gap(750..1000);
    assert!(high_gap < 0.5 * calm_gap, "high {high_gap} calm {calm_gap}");
}
