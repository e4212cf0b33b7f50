mod common;

use ndarray::{Array1, Axis};
use proptest::prelude::*;
use vbsparse::data::replication_rng;
use vbsparse::{compute_metrics, find_scenario, generate_scenario, read_csv, scenario_catalog, standardize, Sample, ScenarioSpec};

fn regression_sample(name: &str, rep: u64, n: usize, p: usize) -> (ndarray::Array2<f64>, Array1<f64>, Array1<f64>) {
    let mut spec = find_scenario(name).unwrap();
    spec.n = n;
    spec.p = p;
    spec.beta_star.resize(p, 0.0);
    spec.s = spec.support().len();
    match generate_scenario::<f64>(&spec, rep).unwrap() {
        (Sample::Regression { x, y }, beta) => (x, y, beta),
        _ => unreachable!(),
    }
}

fn correlation(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
    let cov: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn every_catalog_entry_is_valid() {
    let cat = scenario_catalog();
    assert_eq!(cat.len(), 17);
    for (name, spec) in &cat {
        spec.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(spec.support().len(), spec.s);
    }
    assert!(find_scenario("sim9").is_none());
}

#[test]
fn standardization_is_idempotent() {
    let mut r = common::rng(2);
    let x = common::gaussian_matrix(&mut r, 25, 6) * 3.0 + 1.5;
    let y = common::uniform_vec(&mut r, 25, 2.0) + 7.0;
    let once = standardize(x.view(), y.view()).unwrap();
    for col in once.x.columns() {
        assert!(col.sum().abs() < 1e-12);
        assert!((col.dot(&col) - 25.0).abs() < 1e-10);
    }
    assert!(once.y.sum().abs() < 1e-12);
    let twice = standardize(once.x.view(), once.y.view()).unwrap();
    assert!(common::max_abs_diff(&Array1::from_iter(twice.x.iter().copied()), &Array1::from_iter(once.x.iter().copied())) < 1e-13);
    assert!(twice.col_scales.iter().all(|s| (s - 1.0).abs() < 1e-13));
}

#[test]
fn constant_column_is_rejected() {
    let mut x = common::gaussian_matrix(&mut common::rng(3), 10, 3);
    x.column_mut(1).fill(4.2);
    let err = standardize(x.view(), Array1::zeros(10).view()).unwrap_err();
    assert_eq!(err, vbsparse::Error::ConstantColumn(1));
}

#[test]
fn independent_design_is_uncorrelated() {
    let (x, _, _) = regression_sample("sim1-case1", 0, 4000, 4);
    for j in 0..3 {
        assert!(correlation(x.column(j), x.column(j + 1)).abs() < 0.05);
    }
    let var = x.column(0).var(0.0);
    assert!((var - 1.0).abs() < 0.06);
}

#[test]
fn ar1_design_has_geometric_correlation() {
    let (x, _, _) = regression_sample("sim3-rho0.5", 0, 6000, 4);
    assert!((correlation(x.column(0), x.column(1)) - 0.5).abs() < 0.03);
    assert!((correlation(x.column(0), x.column(2)) - 0.25).abs() < 0.03);
    assert!((correlation(x.column(1), x.column(3)) - 0.25).abs() < 0.03);
}

#[test]
fn residual_variance_matches_noise_level() {
    let (x, y, beta) = regression_sample("sim1-case2", 1, 3000, 20);
    let resid = &y - &x.dot(&beta);
    let var = resid.var(0.0);
    assert!((var - 1.0).abs() < 0.08, "{var}");
}

#[test]
fn replications_are_independent_of_generation_order() {
    let spec = find_scenario("sim4-case1").unwrap();
    let a = generate_scenario::<f64>(&spec, 3).unwrap();
    let _ = generate_scenario::<f64>(&spec, 7).unwrap();
    let b = generate_scenario::<f64>(&spec, 3).unwrap();
    assert_eq!(a, b);
    let c = generate_scenario::<f64>(&spec, 4).unwrap();
    assert_ne!(a.0.y(), c.0.y());
    use rand::Rng;
    let x: u64 = replication_rng(1, 0).random();
    let y: u64 = replication_rng(1, 1).random();
    assert_ne!(x, y);
}

#[test]
fn scenario_round_trips_through_json() {
    for (_, spec) in scenario_catalog() {
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
    let bad = r#"{"n": 4, "p": 4, "s": 1, "beta_star": [1, 0, 0, 0], "rho": 0, "sigma_true": 1,
                  "design": "orthogonal_means", "seed": 1, "replications": 1, "extra": 2}"#;
    assert!(serde_json::from_str::<ScenarioSpec>(bad).is_err());
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = find_scenario("sim1-case1").unwrap();
    spec.s = 3;
    assert!(spec.validate().is_err());
    let mut spec = find_scenario("sim4-case1").unwrap();
    spec.p = 400;
    spec.beta_star.truncate(400);
    assert!(spec.validate().is_err());
    let mut spec = find_scenario("sim1-case1").unwrap();
    spec.rho = 1.0;
    assert!(spec.validate().is_err());
}

#[test]
fn csv_reader_splits_response() {
    let text = "a, y ,b\n1,2,3\n4,5,6\n7,8,9.5\n";
    let (x, y, names) = read_csv(text.as_bytes()).unwrap();
    assert_eq!(names, vec!["a", "b"]);
    assert_eq!(y.to_vec(), vec![2.0, 5.0, 8.0]);
    assert_eq!(x.index_axis(Axis(0), 2).to_vec(), vec![7.0, 9.5]);
    assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    assert!(read_csv("a,y\n1,x\n".as_bytes()).is_err());
}

#[test]
fn metrics_aggregate_replications() {
    let beta_star = vec![vec![1.0, 0.0, 0.0]; 2];
    let outcomes = vec![
        vbsparse::ReplicationOutcome { beta_hat: vec![1.0, 0.0, 0.0], s_hat: vec![0], runtime_sec: 0.1 },
        vbsparse::ReplicationOutcome { beta_hat: vec![1.0, 3.0, 4.0], s_hat: vec![0, 1, 2], runtime_sec: 0.3 },
    ];
    let m = compute_metrics("t", "vb", &outcomes, &beta_star).unwrap();
    assert_eq!(m.l2_mean, 2.5);
    assert_eq!(m.mean_model_size, 2.0);
    assert_eq!(m.p_superset, 1.0);
    assert_eq!(m.p_exact, 0.5);
    assert!((m.l2_se - 12.5f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn standardized_columns_have_unit_scale(seed in 0u64..10_000, n in 3usize..40, p in 1usize..6, shift in -50.0f64..50.0) {
        let x = common::gaussian_matrix(&mut common::rng(seed), n, p) + shift;
        let y = Array1::from_iter((0..n).map(|i| i as f64));
        let d = standardize(x.view(), y.view()).unwrap();
        for col in d.x.columns() {
            prop_assert!(col.sum().abs() < 1e-9);
            prop_assert!((col.dot(&col) - n as f64).abs() < 1e-9);
        }
        let (b0, raw) = d.to_raw_coefficients(Array1::zeros(p).view());
        prop_assert!((b0 - (n as f64 - 1.0) / 2.0).abs() < 1e-12);
        prop_assert!(raw.iter().all(|v| *v == 0.0));
    }
}
