mod common;

use common::{rng, uniform_vec};
use ndarray::Array1;
use statrs::distribution::{ContinuousCDF, Normal};
use vbsparse::seqmodel::{coordinate_interval, coverage_experiment, exact_posterior_inclusion, functional_mixture, lambda_n};
use vbsparse::{credible_interval, credible_upper_bound, find_scenario, fit_means, FunctionalQuery, PriorConfig};

/// Posterior inclusion by brute force: weight every subset by the product of
/// per-coordinate prior mass and tempered marginal likelihood, then sum.
fn brute_force_inclusion(y: &[f64], sigma2: f64, prior: &PriorConfig) -> Vec<f64> {
    let n = y.len();
    let lam = (n as f64).powf(-(prior.a + 1.0));
    let (a, g) = (prior.alpha, prior.gamma);
    // integral of exp(-a (y-b)^2 / 2s) N(b; y, s/g) db = sqrt(g / (a + g))
    let slab = lam * (g / (a + g)).sqrt();
    let spike: Vec<f64> = y.iter().map(|v| (1.0 - lam) * (-a * v * v / (2.0 * sigma2)).exp()).collect();
    let mut incl = vec![0.0; n];
    let mut total = 0.0;
    for mask in 0usize..1 << n {
        let w: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { slab } else { spike[i] }).product();
        total += w;
        for (i, v) in incl.iter_mut().enumerate() {
            if mask >> i & 1 == 1 {
                *v += w;
            }
        }
    }
    incl.iter().map(|v| v / total).collect()
}

#[test]
fn closed_form_matches_enumeration() {
    let mut r = rng(17);
    for trial in 0..30 {
        let n = 1 + trial % 10;
        let y = uniform_vec(&mut r, n, 4.0);
        let sigma2 = 0.5 + (trial as f64) / 20.0;
        let prior = PriorConfig::default();
        let fit = fit_means(y.view(), sigma2, &prior).unwrap();
        let oracle = brute_force_inclusion(y.as_slice().unwrap(), sigma2, &prior);
        let exact = exact_posterior_inclusion(y.view(), sigma2, &prior).unwrap();
        for i in 0..n {
            assert!((fit.phi[i] - oracle[i]).abs() <= 1e-10, "trial {trial} coord {i}");
            assert!((exact[i] - oracle[i]).abs() <= 1e-10);
        }
    }
}

#[test]
fn variational_variance_and_rate() {
    let prior = PriorConfig::default();
    let fit = fit_means(Array1::from(vec![0.0, 3.0]).view(), 2.0, &prior).unwrap();
    assert_eq!(fit.tau2, 2.0 / (prior.alpha + prior.gamma));
    assert!((fit.lambda_n - 2f64.powf(-1.05)).abs() < 1e-15);
    assert!((lambda_n::<f64>(100, 0.05) - 100f64.powf(-1.05)).abs() < 1e-15);
    assert_eq!(fit.mu[1], 3.0);
}

#[test]
fn quantiles_invert_the_mixture_cdf() {
    let y = Array1::from(vec![0.3, 2.5, -1.8, 4.0, 0.0, 1.1]);
    let fit = fit_means(y.view(), 1.0, &PriorConfig::default()).unwrap();
    let w = [0.5, -1.0, 0.25, 2.0, 0.0, 1.0];
    let mix = functional_mixture(&fit, &w).unwrap();
    let total: f64 = mix.atom + mix.components.iter().map(|c| c.0).sum::<f64>();
    assert!((total - 1.0).abs() < 1e-12);
    for &q in &[0.01, 0.1, 0.3, 0.5, 0.8, 0.975] {
        let x = mix.quantile(q);
        if x == 0.0 && mix.atom > 0.0 {
            assert!(mix.cdf(-1e-12) <= q && mix.cdf(0.0) >= q);
        } else {
            assert!((mix.cdf(x) - q).abs() < 1e-9, "q = {q}");
        }
    }
    let q = FunctionalQuery { w: w.to_vec(), zeta: 0.05 };
    let (lo, hi) = credible_interval(&fit, &q).unwrap();
    assert!(lo < hi);
    assert_eq!(credible_upper_bound(&fit, &q).unwrap(), hi);
}

#[test]
fn strong_signal_interval_is_gaussian() {
    let prior = PriorConfig::default();
    let mut y = Array1::zeros(50);
    y[0] = 12.0;
    let fit = fit_means(y.view(), 1.0, &prior).unwrap();
    let (lo, hi) = coordinate_interval(&fit, 0, 0.025);
    let z = Normal::standard().inverse_cdf(0.975);
    let half = z * (1.0 / (prior.alpha + prior.gamma)).sqrt();
    assert!((lo - (12.0 - half)).abs() < 1e-9 && (hi - (12.0 + half)).abs() < 1e-9);
    // a null coordinate collapses onto the atom
    assert_eq!(coordinate_interval(&fit, 1, 0.025), (0.0, 0.0));
}

#[test]
fn invalid_queries_are_rejected() {
    let fit = fit_means(Array1::from(vec![1.0, 2.0]).view(), 1.0, &PriorConfig::default()).unwrap();
    assert!(credible_interval(&fit, &FunctionalQuery { w: vec![1.0, 0.0], zeta: 0.5 }).is_err());
    assert!(credible_interval(&fit, &FunctionalQuery { w: vec![1.0], zeta: 0.05 }).is_err());
    assert!(credible_interval(&fit, &FunctionalQuery { w: vec![0.0, 0.0], zeta: 0.05 }).is_err());
    assert!(fit_means(Array1::from(vec![1.0]).view(), 0.0, &PriorConfig::default()).is_err());
    assert!(exact_posterior_inclusion(Array1::zeros(13).view(), 1.0, &PriorConfig::default()).is_err());
}

#[test]
fn small_coverage_experiment() {
    let mut spec = find_scenario("sim4-case1").unwrap();
    spec.replications = 10;
    let report = coverage_experiment(&spec, &PriorConfig::default(), 0.025, None).unwrap();
    assert_eq!(report.replications, 10);
    assert_eq!(report.leading_fifth().len(), 100);
    assert!(report.signal_coverage >= 0.8);
    assert!((report.mean_length_selected - 3.93).abs() < 0.05);
    for row in &report.coordinates[..50] {
        assert!(row.mean_phi > 0.99);
    }
}
