//! Datasets, standardization and seeded synthetic scenarios.
//!
//! Standardized designs satisfy `sum_i x_ij = 0` and `sum_i x_ij^2 = n` for
//! every column (population scaling), and the response is centered but not
//! rescaled. The coordinate updates elsewhere in the crate rely on the
//! diagonal of `X^T X` being exactly `n`.

use std::io::Read;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A standardized regression dataset together with the metadata needed to
/// map coefficients back to the raw scale.
///
/// `x` is stored column-major so that per-coordinate updates touch
/// contiguous memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Dataset<T> {
    pub x: Array2<T>,
    pub y: Array1<T>,
    pub col_means: Array1<T>,
    pub col_scales: Array1<T>,
    pub y_mean: T,
}

impl<T: Real> Dataset<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Maps standardized-scale coefficients to the raw scale, returning
    /// `(intercept, coefficients)`.
    pub fn to_raw_coefficients(&self, beta: ArrayView1<'_, T>) -> (T, Array1<T>) {
        let raw = &beta / &self.col_scales;
        let intercept = self.y_mean - raw.dot(&self.col_means);
        (intercept, raw)
    }

    /// `X^T y` on the standardized scale.
    pub fn xty(&self) -> Array1<T> {
        self.x.t().dot(&self.y)
    }

    /// Squared column norms; each equals `n` up to rounding.
    pub fn col_sq_norms(&self) -> Array1<T> {
        Array1::from_iter(self.x.columns().into_iter().map(|c| c.dot(&c)))
    }
}

/// Centers and scales `x_raw` so every column has mean zero and squared
/// norm `n`, and centers `y_raw`.
pub fn standardize<T: Real>(x_raw: ArrayView2<'_, T>, y_raw: ArrayView1<'_, T>) -> Result<Dataset<T>> {
    let (n, p) = x_raw.dim();
    if y_raw.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y_raw.len() });
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 observations, got {n}")));
    }
    let nf = T::from_usize_lossy(n);
    let mut x = Array2::<T>::zeros((n, p).f());
    let mut col_means = Array1::zeros(p);
    let mut col_scales = Array1::zeros(p);
    for j in 0..p {
        let col = x_raw.column(j);
        let mean = col.sum() / nf;
        let ss: T = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
        let scale = (ss / nf).sqrt();
        let magnitude = col.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !(scale > T::epsilon() * T::lit(16.0) * magnitude) {
            return Err(Error::ConstantColumn(j));
        }
        let mut dst = x.column_mut(j);
        for (d, &v) in dst.iter_mut().zip(col.iter()) {
            *d = (v - mean) / scale;
        }
        col_means[j] = mean;
        col_scales[j] = scale;
    }
    let y_mean = y_raw.sum() / nf;
    let y = y_raw.mapv(|v| v - y_mean);
    Ok(Dataset { x, y, col_means, col_scales, y_mean })
}

/// Reads a CSV with a header row, a response column named `y` and every
/// other column treated as a predictor.
pub fn read_csv<R: Read>(reader: R) -> Result<(Array2<f64>, Array1<f64>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("cannot read header row: {e}")))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::InvalidInput("missing response column \"y\"".into()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let p = names.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2; // 1-based, counting the header
        let rec = rec.map_err(|e| Error::InvalidInput(format!("row {row}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidInput(format!("row {row}, column \"{}\": cannot parse {field:?}", &headers[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("row {row}, column \"{}\": non-finite value", &headers[c])));
            }
            if c == y_col {
                y.push(v);
            } else {
                rows.push(v);
            }
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, p), rows).expect("row lengths checked");
    Ok((x, Array1::from(y), names))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Rows iid `N_p(0, Psi)` with `Psi_ij = rho^|i-j|`.
    GaussianAr1,
    /// Sequence model `y_i = beta_i + sigma * eps_i`, with `n = p`.
    OrthogonalMeans,
}

/// A simulation scenario definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub sigma_true: f64,
    pub design: Design,
    pub seed: u64,
    pub replications: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n == 0 || self.p == 0 || self.replications == 0 {
            return bad("n, p and replications must be positive".into());
        }
        if self.beta_star.len() != self.p {
            return bad(format!("beta_star has length {} but p = {}", self.beta_star.len(), self.p));
        }
        if self.beta_star.iter().any(|b| !b.is_finite()) {
            return bad("beta_star must be finite".into());
        }
        let nnz = self.support().len();
        if nnz != self.s {
            return bad(format!("s = {} but beta_star has {nnz} nonzeros", self.s));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho = {} outside [0, 1)", self.rho));
        }
        if !(self.sigma_true > 0.0 && self.sigma_true.is_finite()) {
            return bad(format!("sigma_true = {} must be positive", self.sigma_true));
        }
        match self.design {
            Design::GaussianAr1 => {
                if self.s > self.n {
                    return bad(format!("s = {} exceeds n = {}", self.s, self.n));
                }
            }
            Design::OrthogonalMeans => {
                if self.n != self.p {
                    return bad(format!("orthogonal_means requires n = p, got n = {}, p = {}", self.n, self.p));
                }
            }
        }
        Ok(())
    }

    /// Indices of the nonzero entries of `beta_star`, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.beta_star.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(i, _)| i).collect()
    }
}

/// One generated replication, on the raw (unstandardized) scale.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample<T> {
    Regression { x: Array2<T>, y: Array1<T> },
    Means { y: Array1<T> },
}

impl<T> Sample<T> {
    pub fn y(&self) -> &Array1<T> {
        match self {
            Sample::Regression { y, .. } | Sample::Means { y } => y,
        }
    }
}

/// The random stream for one replication: ChaCha20 keyed by `seed`, with the
/// replication index selecting the 64-bit stream id. Distinct replications
/// are therefore independent and can be generated in any order.
pub fn replication_rng(seed: u64, replication_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication_index);
    rng
}

/// Draws replication `replication_index` of `spec`. Returns the sample and
/// the true coefficient vector.
pub fn generate_scenario<T: Real>(spec: &ScenarioSpec, replication_index: u64) -> Result<(Sample<T>, Array1<T>)> {
    spec.validate()?;
    let mut rng = replication_rng(spec.seed, replication_index);
    let beta = Array1::from_iter(spec.beta_star.iter().map(|&b| T::lit(b)));
    let sigma = spec.sigma_true;
    match spec.design {
        Design::OrthogonalMeans => {
            let y = Array1::from_iter(spec.beta_star.iter().map(|&b| {
                let e: f64 = rng.sample(StandardNormal);
                T::lit(b + sigma * e)
            }));
            Ok((Sample::Means { y }, beta))
        }
        Design::GaussianAr1 => {
            let (n, p) = (spec.n, spec.p);
            let rho = spec.rho;
            let innov = (1.0 - rho * rho).sqrt();
            // Row-wise AR(1) recursion: x_1 = z_1, x_j = rho x_{j-1} + sqrt(1-rho^2) z_j.
            // This is the product of the Cholesky factor of Psi with z.
            let mut x = Array2::<f64>::zeros((n, p).f());
            let mut y = Array1::<f64>::zeros(n);
            for i in 0..n {
                let mut prev = 0.0;
                let mut mean = 0.0;
                for j in 0..p {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = if j == 0 { z } else { rho * prev + innov * z };
                    x[[i, j]] = v;
                    mean += v * spec.beta_star[j];
                    prev = v;
                }
                let e: f64 = rng.sample(StandardNormal);
                y[i] = mean + sigma * e;
            }
            Ok((Sample::Regression { x: x.mapv(T::lit), y: y.mapv(T::lit) }, beta))
        }
    }
}

fn padded(p: usize, head: &[f64]) -> Vec<f64> {
    let mut v = head.to_vec();
    v.resize(p, 0.0);
    v
}

fn arithmetic(start: f64, step: f64, len: usize) -> Vec<f64> {
    (0..len).map(|k| start + step * k as f64).collect()
}

fn linspace(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    (0..len).map(|k| lo + (hi - lo) * k as f64 / (len - 1) as f64).collect()
}

/// All built-in scenarios, in catalog order.
pub fn scenario_catalog() -> Vec<(String, ScenarioSpec)> {
    let reg = |n: usize, p: usize, head: Vec<f64>, rho: f64, seed: u64| ScenarioSpec {
        n,
        p,
        s: head.len(),
        beta_star: padded(p, &head),
        rho,
        sigma_true: 1.0,
        design: Design::GaussianAr1,
        seed,
        replications: 100,
    };
    let means = |n: usize, s: usize, b: f64, seed: u64| ScenarioSpec {
        n,
        p: n,
        s,
        beta_star: padded(n, &vec![b; s]),
        rho: 0.0,
        sigma_true: 1.0,
        design: Design::OrthogonalMeans,
        seed,
        replications: 100,
    };
    let quarter_steps = {
        let mut v = Vec::with_capacity(20);
        for level in [0.5, 1.0, 1.5, 2.0] {
            v.extend(std::iter::repeat(level).take(5));
        }
        v
    };
    vec![
        ("sim1-case1".into(), reg(100, 400, arithmetic(0.5, 0.5, 10), 0.0, 1001)),
        ("sim1-case2".into(), reg(200, 400, arithmetic(0.5, 0.5, 10), 0.0, 1002)),
        ("sim1-case3".into(), reg(100, 400, quarter_steps, 0.0, 1003)),
        ("sim1-case4".into(), reg(200, 800, arithmetic(0.5, 0.5, 20), 0.0, 1004)),
        ("sim1-case5".into(), reg(200, 1600, linspace(1.0, 10.0, 40), 0.0, 1005)),
        ("sim2-signal10".into(), reg(200, 1600, vec![10.0; 40], 0.0, 2001)),
        ("sim2-signal1".into(), reg(200, 1600, vec![1.0; 40], 0.0, 2002)),
        ("sim2-signal0.6".into(), reg(200, 1600, vec![0.6; 40], 0.0, 2003)),
        ("sim3-rho0.2".into(), reg(100, 400, arithmetic(0.6, 0.3, 10), 0.2, 3001)),
        ("sim3-rho0.5".into(), reg(100, 400, arithmetic(0.6, 0.3, 10), 0.5, 3002)),
        ("sim3-rho0.8".into(), reg(100, 400, arithmetic(0.6, 0.3, 10), 0.8, 3003)),
        ("sim4-case1".into(), means(500, 50, 10.0, 4001)),
        ("sim4-case2".into(), means(1000, 100, 10.0, 4002)),
        ("sim4-case3".into(), means(2000, 200, 10.0, 4003)),
        ("sim4-case4".into(), means(500, 50, 2.0, 4004)),
        ("sim4-case5".into(), means(1000, 100, 2.0, 4005)),
        ("sim4-case6".into(), means(2000, 200, 2.0, 4006)),
    ]
}

pub fn find_scenario(name: &str) -> Option<ScenarioSpec> {
    scenario_catalog().into_iter().find(|(k, _)| k == name).map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_standardization() {
        let x = array![[1.0], [3.0]];
        let y = array![0.0, 2.0];
        let d = standardize(x.view(), y.view()).unwrap();
        assert_eq!(d.x, array![[-1.0], [1.0]]);
        assert_eq!(d.y, array![-1.0, 1.0]);
        assert_eq!(d.col_scales[0], 1.0);
        assert_eq!(d.col_means[0], 2.0);
        assert_eq!(d.y_mean, 1.0);
    }

    #[test]
    fn standardized_column_is_fixed_point() {
        let x = array![[1.0, 5.0], [-1.0, 7.0], [1.0, 5.5], [-1.0, 2.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        let d = standardize(x.view(), y.view()).unwrap();
        assert_eq!(d.col_scales[0], 1.0);
        assert_eq!(d.col_means[0], 0.0);
        assert_eq!(d.x.column(0), x.column(0));
    }

    #[test]
    fn constant_column_and_length_mismatch_are_errors() {
        let x = array![[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]];
        let y = array![1.0, 2.0, 3.0];
        assert_eq!(standardize(x.view(), y.view()).unwrap_err(), Error::ConstantColumn(0));
        let y2 = array![1.0, 2.0];
        assert!(matches!(standardize(x.view(), y2.view()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn raw_coefficients_reproduce_fitted_values() {
        let x = array![[1.0, 10.0], [2.0, 14.0], [4.0, 9.0], [7.0, 11.0]];
        let y = array![3.0, 1.0, 4.0, 1.5];
        let d = standardize(x.view(), y.view()).unwrap();
        let beta = array![0.3f64, -1.2];
        let (b0, raw) = d.to_raw_coefficients(beta.view());
        let fitted_std = d.x.dot(&beta) + d.y_mean;
        let fitted_raw = x.dot(&raw) + b0;
        for (a, b) in fitted_std.iter().zip(fitted_raw.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_reader_finds_response_and_names_bad_cells() {
        let text = "a,y,b\n1,2,3\n4,5,6\n";
        let (x, y, names) = read_csv(text.as_bytes()).unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(x, array![[1.0, 3.0], [4.0, 6.0]]);
        assert_eq!(y, array![2.0, 5.0]);

        let err = read_csv("a,b\n1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("\"y\""));
        let err = read_csv("a,y\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("column \"y\""), "{msg}");
    }

    #[test]
    fn catalog_matches_published_cases() {
        let cat = scenario_catalog();
        assert_eq!(cat.len(), 17);
        let c1 = find_scenario("sim1-case1").unwrap();
        assert_eq!((c1.n, c1.p, c1.s), (100, 400, 10));
        assert_eq!(&c1.beta_star[..10], &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]);
        let s2 = find_scenario("sim2-signal0.6").unwrap();
        assert_eq!((s2.n, s2.p, s2.s), (200, 1600, 40));
        assert!(s2.beta_star[..40].iter().all(|&b| b == 0.6));
        let s3 = find_scenario("sim3-rho0.8").unwrap();
        assert_eq!(s3.rho, 0.8);
        let expect = [0.6, 0.9, 1.2, 1.5, 1.8, 2.1, 2.4, 2.7, 3.0, 3.3];
        for (a, b) in s3.beta_star[..10].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let s4 = find_scenario("sim4-case4").unwrap();
        assert_eq!((s4.n, s4.s, s4.design), (500, 50, Design::OrthogonalMeans));
        assert!(s4.beta_star[..50].iter().all(|&b| b == 2.0));
        let c5 = find_scenario("sim1-case5").unwrap();
        assert_eq!(c5.beta_star[0], 1.0);
        assert!((c5.beta_star[39] - 10.0).abs() < 1e-12);
        for (_, spec) in &cat {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn generation_is_deterministic_per_replication() {
        let spec = find_scenario("sim3-rho0.5").unwrap();
        let (a, _) = generate_scenario::<f64>(&spec, 3).unwrap();
        let (b, _) = generate_scenario::<f64>(&spec, 3).unwrap();
        let (c, _) = generate_scenario::<f64>(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = find_scenario("sim1-case1").unwrap();
        spec.s = 11;
        assert!(matches!(generate_scenario::<f64>(&spec, 0), Err(Error::InvalidSpec(_))));
        let mut spec = find_scenario("sim4-case1").unwrap();
        spec.p = 499;
        spec.beta_star.pop();
        assert!(spec.validate().is_err());
    }
}
