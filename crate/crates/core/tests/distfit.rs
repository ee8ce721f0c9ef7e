use corrstress::distfit::{
    fit_em, ks_test, marginal_params, sample_inverse_gaussian, sample_nig, NigMarginalCdf, NigParams,
};
use corrstress::rng;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::digamma;

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::integrate(f, a, b, 1e-12).integral
}

/// `int_R f` via `x = c + t/(1 - t^2)`.
fn integrate_real_line(f: impl Fn(f64) -> f64, c: f64) -> f64 {
    integrate(
        |t| {
            let s = 1.0 - t * t;
            if s <= 0.0 {
                return 0.0;
            }
            let v = f(c + t / s);
            if v == 0.0 {
                0.0
            } else {
                v * (1.0 + t * t) / (s * s)
            }
        },
        -1.0,
        1.0,
    )
}

/// Inverse-Gaussian mixing density written out from the GIG form at index -1/2.
fn gig_density(w: f64, chi: f64, psi: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    (chi / (2.0 * std::f64::consts::PI)).sqrt() * w.powf(-1.5) * ((chi * psi).sqrt() - 0.5 * (chi / w + psi * w)).exp()
}

/// `E[W^k]` under the mixing law by quadrature.
fn gig_moment(k: i32, chi: f64, psi: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let w = t / s;
            let v = gig_density(w, chi, psi);
            if v == 0.0 {
                0.0
            } else {
                w.powi(k) * v / (s * s)
            }
        },
        0.0,
        1.0,
    )
}

fn p1(chi: f64, psi: f64, mu: f64, s2: f64, g: f64) -> NigParams {
    NigParams::new(
        chi,
        psi,
        DVector::from_element(1, mu),
        DMatrix::from_element(1, 1, s2),
        DVector::from_element(1, g),
    )
    .unwrap()
}

fn three_dim() -> NigParams {
    NigParams::new(
        1.2,
        0.9,
        DVector::from_vec(vec![0.1, -0.2, 0.05]),
        DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 0.8, 0.1, -0.2, 0.1, 0.5]),
        DVector::from_vec(vec![0.2, -0.1, 0.15]),
    )
    .unwrap()
}

fn two_sample_ks(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[test]
fn density_integrates_to_one_in_one_dimension() {
    for p in [
        p1(1.0, 1.0, 0.0, 1.0, 0.0),
        p1(0.4, 2.5, 0.3, 0.2, -0.4),
        p1(5.0, 0.2, -1.0, 3.0, 0.7),
    ] {
        let dens = p.density();
        let mass = integrate_real_line(|x| dens.density(&[x]), p.mean()[0]);
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }
}

#[test]
fn symmetric_mode_value_is_normalized() {
    let p = p1(1.0, 1.0, 0.0, 1.0, 0.0);
    let dens = p.density();
    let mode = dens.density(&[0.0]);
    let mass = integrate_real_line(|x| dens.density(&[x]), 0.0);
    let reference = mode / mass;
    assert!((mode - reference).abs() < 1e-6 * reference);
}

#[test]
fn density_integrates_to_one_in_two_dimensions() {
    let p = NigParams::new(
        1.5,
        0.7,
        DVector::from_vec(vec![0.2, -0.1]),
        DMatrix::from_row_slice(2, 2, &[0.8, 0.25, 0.25, 0.5]),
        DVector::from_vec(vec![0.3, -0.2]),
    )
    .unwrap();
    let dens = p.density();
    let m = p.mean();
    let mass = quadrature::integrate(
        |t| {
            let s = 1.0 - t * t;
            if s <= 0.0 {
                return 0.0;
            }
            let x = m[0] + t / s;
            let inner = quadrature::integrate(
                |u| {
                    let r = 1.0 - u * u;
                    if r <= 0.0 {
                        return 0.0;
                    }
                    let v = dens.density(&[x, m[1] + u / r]);
                    if v == 0.0 {
                        0.0
                    } else {
                        v * (1.0 + u * u) / (r * r)
                    }
                },
                -1.0,
                1.0,
                1e-10,
            )
            .integral;
            inner * (1.0 + t * t) / (s * s)
        },
        -1.0,
        1.0,
        1e-10,
    )
    .integral;
    assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
}

#[test]
fn mean_density_over_own_samples_matches_integral_of_square() {
    let p = p1(0.9, 1.4, 0.1, 0.6, 0.25);
    let dens = p.density();
    let exact = integrate_real_line(|x| dens.density(&[x]).powi(2), p.mean()[0]);
    let mut r = rng::stream(3, 0, 0);
    let x = sample_nig(&p, 200_000, &mut r);
    let mc = x.column(0).iter().map(|&v| dens.density(&[v])).sum::<f64>() / x.nrows() as f64;
    assert!((mc - exact).abs() < 0.01 * exact, "mc {mc} exact {exact}");
}

#[test]
fn mixing_mean_matches_quadrature() {
    let (chi, psi) = (1.7, 0.6);
    let mass = gig_moment(0, chi, psi);
    let m1 = gig_moment(1, chi, psi);
    assert!((mass - 1.0).abs() < 1e-8);
    assert!((m1 - (chi / psi).sqrt()).abs() < 1e-8);
    let mut r = rng::stream(11, 0, 0);
    let shape = chi;
    let n = 100_000;
    let mean = (0..n).map(|_| sample_inverse_gaussian(m1, shape, &mut r)).sum::<f64>() / n as f64;
    assert!((mean - m1).abs() < 0.01 * m1);
}

#[test]
fn sample_moments_match_mixture_moments() {
    let p = three_dim();
    let (chi, psi) = (p.chi(), p.psi());
    let ew = gig_moment(1, chi, psi);
    let vw = gig_moment(2, chi, psi) - ew * ew;
    let mean = p.mu() + p.gamma() * ew;
    let cov = p.sigma() * ew + p.gamma() * p.gamma().transpose() * vw;
    let n = 200_000;
    let mut r = rng::stream(5, 0, 0);
    let x = sample_nig(&p, n, &mut r);
    for k in 0..3 {
        let col = x.column(k);
        let m = col.mean();
        let stderr = (cov[(k, k)] / n as f64).sqrt();
        assert!((m - mean[k]).abs() < 3.0 * stderr, "mean {k}");
    }
    let sample_cov = corrstress::linalg::sample_covariance(&x);
    for i in 0..3 {
        for j in 0..3 {
            assert!((sample_cov[(i, j)] - cov[(i, j)]).abs() < 0.03 * cov[(i, i)].max(cov[(j, j)]));
        }
    }
}

#[test]
fn symmetric_sample_mean_is_zero() {
    let p = NigParams::new(1.0, 2.0, DVector::zeros(2), DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
    let n = 100_000;
    let x = sample_nig(&p, n, &mut rng::stream(6, 0, 0));
    let sd = ((1.0f64 / 2.0).sqrt() / n as f64).sqrt();
    for k in 0..2 {
        assert!(x.column(k).mean().abs() < 3.0 * sd);
    }
}

#[test]
fn sampler_is_deterministic_under_seed() {
    let p = three_dim();
    assert_eq!(
        sample_nig(&p, 100, &mut rng::stream(1, 2, 3)),
        sample_nig(&p, 100, &mut rng::stream(1, 2, 3))
    );
}

#[test]
fn projection_then_sample_matches_marginal_law() {
    let p = three_dim();
    let w = [0.5, 0.3, 0.2];
    let marginal = marginal_params(&p, &w).unwrap();
    let n = 100_000;
    let x = sample_nig(&p, n, &mut rng::stream(8, 0, 0));
    let mut projected: Vec<f64> = (0..n).map(|i| (0..3).map(|k| w[k] * x[(i, k)]).sum()).collect();
    let y = sample_nig(&marginal, n, &mut rng::stream(8, 0, 1));
    let mut direct: Vec<f64> = y.column(0).iter().copied().collect();
    assert!(two_sample_ks(&mut projected, &mut direct) < 0.01);
}

#[test]
fn exchangeable_coordinates_share_a_marginal() {
    let p = NigParams::new(1.0, 1.0, DVector::zeros(3), DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
    let a = marginal_params(&p, &[1.0, 0.0, 0.0]).unwrap();
    let b = marginal_params(&p, &[0.0, 0.0, 1.0]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn log_density_agrees_with_nearest_neighbour_entropy() {
    let p = p1(1.3, 0.8, 0.0, 0.7, 0.2);
    let n = 20_000;
    let mut x: Vec<f64> = sample_nig(&p, n, &mut rng::stream(12, 0, 0))
        .column(0)
        .iter()
        .copied()
        .collect();
    let dens = p.density();
    let mean_log = x.iter().map(|&v| dens.log_density(&[v])).sum::<f64>() / n as f64;
    x.sort_by(f64::total_cmp);
    let mut sum_log_rho = 0.0;
    for i in 0..n {
        let left = if i > 0 { x[i] - x[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < n { x[i + 1] - x[i] } else { f64::INFINITY };
        sum_log_rho += left.min(right).max(1e-300).ln();
    }
    // Kozachenko-Leonenko, k = 1, unit ball volume 2 in one dimension
    let entropy = digamma(n as f64) - digamma(1.0) + 2f64.ln() + sum_log_rho / n as f64;
    assert!(
        (mean_log + entropy).abs() < 0.05 * entropy.abs(),
        "{mean_log} vs {entropy}"
    );
}

#[test]
fn ks_rejection_rate_is_nominal() {
    let p = p1(1.0, 1.0, 0.0, 1.0, 0.3);
    let cdf = NigMarginalCdf::new(&p).unwrap();
    let reps = 200;
    let mut rejections = 0;
    for rep in 0..reps {
        let x = sample_nig(&p, 500, &mut rng::stream(20, 0, rep));
        let col: Vec<f64> = x.column(0).iter().copied().collect();
        if ks_test(&col, &cdf).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    // 2% band plus binomial noise on 200 repetitions
    assert!(
        (rate - 0.05).abs() <= 0.02 + 2.0 * (0.05f64 * 0.95 / reps as f64).sqrt(),
        "rate {rate}"
    );
}

#[test]
fn ks_detects_one_sd_shift() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..500)
        .map(|_| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
            z + 1.0
        })
        .collect();
    assert!(ks_test(&x, &|v| normal.cdf(v)).unwrap().p_value < 0.01);
}

#[test]
fn em_recovers_moments_in_three_dimensions() {
    let p = three_dim();
    let x = sample_nig(&p, 20_000, &mut rng::stream(42, 0, 0));
    let (fit, diag) = fit_em(&x, 1e-10, 1000).unwrap();
    assert!(diag.is_monotone());
    let (ew, ew2) = (gig_moment(1, p.chi(), p.psi()), gig_moment(2, p.chi(), p.psi()));
    let mean = p.mu() + p.gamma() * ew;
    let cov = p.sigma() * ew + p.gamma() * p.gamma().transpose() * (ew2 - ew * ew);
    let (fm, fc) = (fit.mean(), fit.covariance());
    for i in 0..3 {
        assert!((fm[i] - mean[i]).abs() <= 0.05 * mean[i].abs().max(cov[(i, i)].sqrt()));
        for j in 0..3 {
            let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
            assert!((fc[(i, j)] - cov[(i, j)]).abs() <= 0.05 * scale, "cov {i}{j}");
        }
    }
    assert!(diag.ks_pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn em_gaussian_limit_has_small_kurtosis() {
    let p = NigParams::new(
        400.0,
        400.0,
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
        DVector::zeros(2),
    )
    .unwrap();
    let x = sample_nig(&p, 5000, &mut rng::stream(2, 0, 0));
    let (fit, _) = fit_em(&x, 1e-9, 1000).unwrap();
    // excess kurtosis of a symmetric NIG marginal is 3 Var(W) / E[W]^2
    let excess = 3.0 * fit.mixing_variance() / fit.mixing_mean().powi(2);
    assert!(excess.abs() <= 0.2, "excess kurtosis {excess}");
}
