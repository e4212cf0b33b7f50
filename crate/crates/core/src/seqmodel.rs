//! The orthogonal-design special case: the sparse normal means model
//! `y_i ~ N(beta_i, sigma^2)`.
//!
//! Here the variational fit is available in closed form:
//! `mu_i = y_i`, `tau2 = sigma^2 / (alpha + gamma)` and
//! `logit phi_i = logit(lambda_n) + 1/2 log(gamma / (alpha + gamma)) + alpha y_i^2 / (2 sigma^2)`,
//! with prior inclusion probability `lambda_n = n^-(a+1)`.
//!
//! For a linear functional `omega = w^T beta` the variational marginal is the
//! mixture over configurations `S` of `N(w_S^T y_S, sigma^2 v ||w_S||^2)`
//! (a point mass at zero when `w_S` is empty), with `v = 1 / (alpha + gamma)`.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{generate_scenario, Design, Sample, ScenarioSpec};
use crate::error::{Error, Result};
use crate::metrics::ReplicationOutcome;
use crate::prior::PriorConfig;
use crate::scalar::{log_sum_exp, sigmoid, Real};

/// Largest `n` accepted by [`exact_posterior_inclusion`].
pub const MAX_ENUMERATION: usize = 12;
/// Functionals with more nonzero weights than this use Monte Carlo.
pub const MAX_EXACT_SUPPORT: usize = 20;
pub const MONTE_CARLO_DRAWS: usize = 200_000;
const MONTE_CARLO_SEED: u64 = 0x00c0_ffee;

/// `n^-(a+1)`.
pub fn lambda_n<T: Real>(n: usize, a: T) -> T {
    T::from_usize_lossy(n).powf(-(a + T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MeansFit<T> {
    pub mu: Array1<T>,
    pub tau2: T,
    pub phi: Array1<T>,
    pub logit_phi: Array1<T>,
    pub lambda_n: T,
    pub sigma2: T,
}

impl<T: Real> MeansFit<T> {
    pub fn beta_hat(&self) -> Array1<T> {
        &self.phi * &self.mu
    }

    pub fn selected(&self) -> Vec<usize> {
        crate::vb::selected_set(self.phi.view())
    }
}

/// Closed-form variational fit of the means model.
pub fn fit_means<T: Real>(y: ArrayView1<'_, T>, sigma2: T, prior: &PriorConfig) -> Result<MeansFit<T>> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidInput("sigma2 must be positive".into()));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("empty response".into()));
    }
    if prior.alpha + prior.gamma > 1.0 {
        log::warn!(
            "alpha + gamma = {} exceeds 1; credible bounds may under-cover",
            prior.alpha + prior.gamma
        );
    }
    let (alpha, gamma) = (T::lit(prior.alpha), T::lit(prior.gamma));
    let half = T::lit(0.5);
    let lam = lambda_n(y.len(), T::lit(prior.a));
    let base = (lam / (T::one() - lam)).ln() + half * (gamma / (alpha + gamma)).ln();
    let logit_phi = y.mapv(|yi| base + alpha / (T::lit(2.0) * sigma2) * yi * yi);
    let phi = logit_phi.mapv(sigmoid);
    Ok(MeansFit { mu: y.to_owned(), tau2: sigma2 / (alpha + gamma), phi, logit_phi, lambda_n: lam, sigma2 })
}

/// Marginal inclusion probabilities of the exact posterior, by enumerating
/// all `2^n` configurations under the independent spike-and-slab prior
/// `lambda_n N(y_i, sigma^2/gamma) + (1 - lambda_n) delta_0` and the
/// `alpha`-power likelihood.
pub fn exact_posterior_inclusion<T: Real>(y: ArrayView1<'_, T>, sigma2: T, prior: &PriorConfig) -> Result<Array1<T>> {
    let n = y.len();
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge { n, max: MAX_ENUMERATION });
    }
    let (alpha, gamma) = (T::lit(prior.alpha), T::lit(prior.gamma));
    let half = T::lit(0.5);
    let ln2pi = T::lit(std::f64::consts::TAU.ln());
    let lam = lambda_n(n, T::lit(prior.a));
    // Slab evidence: the tempered likelihood exp(-alpha (y - b)^2 / (2 sigma^2)) equals
    // sqrt(2 pi sigma^2 / alpha) N(y | b, sigma^2 / alpha); integrating against the slab
    // N(b | y, sigma^2 / gamma) convolves two Gaussians centred at y.
    let log_norm_pdf_zero = |var: T| -half * (ln2pi + var.ln());
    let lik_var = sigma2 / alpha;
    let slab_var = sigma2 / gamma;
    let log_slab = half * (ln2pi + lik_var.ln()) + log_norm_pdf_zero(lik_var + slab_var);
    let log_in = lam.ln() + log_slab;
    let log_out: Vec<T> = y.iter().map(|&v| (T::one() - lam).ln() - alpha * v * v / (T::lit(2.0) * sigma2)).collect();
    let total = 1usize << n;
    let mut log_mass = Vec::with_capacity(total);
    for mask in 0..total {
        let mut lm = T::zero();
        for (i, lo) in log_out.iter().enumerate() {
            lm = lm + if mask >> i & 1 == 1 { log_in } else { *lo };
        }
        log_mass.push(lm);
    }
    let log_z = log_sum_exp(&log_mass);
    let mut incl = Array1::zeros(n);
    for (i, slot) in incl.iter_mut().enumerate() {
        let with: Vec<T> = (0..total).filter(|m| m >> i & 1 == 1).map(|m| log_mass[m]).collect();
        *slot = (log_sum_exp(&with) - log_z).exp();
    }
    Ok(incl)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalQuery {
    pub w: Vec<f64>,
    pub zeta: f64,
}

impl FunctionalQuery {
    pub fn basis(n: usize, i: usize, zeta: f64) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self { w, zeta }
    }
}

/// A Gaussian mixture with an optional atom at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomMixture {
    pub atom: f64,
    /// `(weight, mean, sd)`.
    pub components: Vec<(f64, f64, f64)>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl AtomMixture {
    /// CDF excluding the atom, i.e. `P(omega < x)` minus any atom mass below `x`.
    fn continuous_cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|&(w, m, s)| w * std_normal_cdf((x - m) / s)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.continuous_cdf(x) + if x >= 0.0 { self.atom } else { 0.0 }
    }

    /// Smallest `x` with `cdf(x) >= prob`, by bisection.
    pub fn quantile(&self, prob: f64) -> f64 {
        if self.atom > 0.0 {
            let below = self.continuous_cdf(0.0);
            if below < prob && prob <= below + self.atom {
                return 0.0;
            }
        }
        let (mut lo, mut hi) = self.components.iter().fold((-1.0f64, 1.0f64), |(lo, hi), &(_, m, s)| {
            (lo.min(m - 40.0 * s), hi.max(m + 40.0 * s))
        });
        while self.cdf(lo) >= prob {
            lo = 2.0 * lo - 1.0;
        }
        while self.cdf(hi) < prob {
            hi = 2.0 * hi + 1.0;
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-13 * (1.0 + hi.abs()) {
                break;
            }
            if self.cdf(mid) >= prob {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Mixture for `w^T beta` under the variational fit, enumerating the
/// `2^nnz(w)` inclusion patterns of the support of `w`.
pub fn functional_mixture<T: Real>(fit: &MeansFit<T>, w: &[f64]) -> Result<AtomMixture> {
    let support: Vec<usize> = w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
    if support.len() > MAX_EXACT_SUPPORT {
        return Err(Error::TooLarge { n: support.len(), max: MAX_EXACT_SUPPORT });
    }
    let tau = fit.tau2.to_f64_lossy().sqrt();
    let mut atom = 0.0;
    let mut components = Vec::new();
    for mask in 0..(1usize << support.len()) {
        let (mut weight, mut mean, mut ss) = (1.0, 0.0, 0.0);
        for (k, &i) in support.iter().enumerate() {
            let phi = fit.phi[i].to_f64_lossy();
            if mask >> k & 1 == 1 {
                weight *= phi;
                mean += w[i] * fit.mu[i].to_f64_lossy();
                ss += w[i] * w[i];
            } else {
                weight *= 1.0 - phi;
            }
        }
        if weight == 0.0 {
            continue;
        }
        if mask == 0 {
            atom = weight;
        } else {
            components.push((weight, mean, tau * ss.sqrt()));
        }
    }
    Ok(AtomMixture { atom, components })
}

fn monte_carlo_quantile<T: Real>(fit: &MeansFit<T>, w: &[f64], prob: f64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(MONTE_CARLO_SEED);
    let tau = fit.tau2.to_f64_lossy().sqrt();
    let support: Vec<(f64, f64, f64)> = w
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &wi)| (wi, fit.mu[i].to_f64_lossy(), fit.phi[i].to_f64_lossy()))
        .collect();
    let mut draws: Vec<f64> = (0..MONTE_CARLO_DRAWS)
        .map(|_| {
            let (mut mean, mut ss) = (0.0, 0.0);
            for &(wi, mi, phi) in &support {
                if rng.random::<f64>() < phi {
                    mean += wi * mi;
                    ss += wi * wi;
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            mean + tau * ss.sqrt() * z
        })
        .collect();
    draws.sort_by(|a, b| a.total_cmp(b));
    let k = ((prob * MONTE_CARLO_DRAWS as f64).ceil() as usize).clamp(1, MONTE_CARLO_DRAWS);
    draws[k - 1]
}

fn check_query<T: Real>(fit: &MeansFit<T>, q: &FunctionalQuery) -> Result<()> {
    if !(q.zeta > 0.0 && q.zeta < 0.5) {
        return Err(Error::InvalidLevel(q.zeta));
    }
    if q.w.len() != fit.mu.len() {
        return Err(Error::DimensionMismatch { expected: fit.mu.len(), found: q.w.len() });
    }
    if q.w.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("functional weights must not all be zero".into()));
    }
    Ok(())
}

fn functional_quantile<T: Real>(fit: &MeansFit<T>, w: &[f64], prob: f64) -> Result<f64> {
    let nnz = w.iter().filter(|v| **v != 0.0).count();
    if nnz <= MAX_EXACT_SUPPORT {
        Ok(functional_mixture(fit, w)?.quantile(prob))
    } else {
        Ok(monte_carlo_quantile(fit, w, prob))
    }
}

/// The `(1 - zeta)` upper credible bound for `w^T beta`.
pub fn credible_upper_bound<T: Real>(fit: &MeansFit<T>, q: &FunctionalQuery) -> Result<T> {
    check_query(fit, q)?;
    functional_quantile(fit, &q.w, 1.0 - q.zeta).map(T::lit)
}

/// Equal-tailed `(1 - 2 zeta)` credible interval for `w^T beta`.
pub fn credible_interval<T: Real>(fit: &MeansFit<T>, q: &FunctionalQuery) -> Result<(T, T)> {
    check_query(fit, q)?;
    let lo = functional_quantile(fit, &q.w, q.zeta)?;
    let hi = functional_quantile(fit, &q.w, 1.0 - q.zeta)?;
    Ok((T::lit(lo), T::lit(hi)))
}

/// Interval for a single coordinate without building a query vector.
pub fn coordinate_interval<T: Real>(fit: &MeansFit<T>, i: usize, zeta: f64) -> (f64, f64) {
    let phi = fit.phi[i].to_f64_lossy();
    let sd = fit.tau2.to_f64_lossy().sqrt();
    let mix = AtomMixture {
        atom: 1.0 - phi,
        components: if phi > 0.0 { vec![(phi, fit.mu[i].to_f64_lossy(), sd)] } else { vec![] },
    };
    (mix.quantile(zeta), mix.quantile(1.0 - zeta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateCoverage {
    pub coordinate: usize,
    pub beta_star: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub mean_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub zeta: f64,
    pub coordinates: Vec<CoordinateCoverage>,
    /// Average interval length over all (replication, coordinate) pairs with `phi > 1/2`.
    pub mean_length_selected: f64,
    /// Coverage pooled over the coordinates with `beta_star != 0`.
    pub signal_coverage: f64,
    pub outcomes: Vec<ReplicationOutcome>,
    pub beta_star: Vec<f64>,
}

impl CoverageReport {
    /// Rows for the first `ceil(0.2 n)` coordinates.
    pub fn leading_fifth(&self) -> &[CoordinateCoverage] {
        let k = (self.coordinates.len() as f64 * 0.2).ceil() as usize;
        &self.coordinates[..k]
    }

    pub fn csv_header() -> &'static str {
        "coordinate,beta_star,coverage,mean_length,mean_phi"
    }
}

struct RepCoverage {
    covered: Vec<bool>,
    length: Vec<f64>,
    phi: Vec<f64>,
    outcome: ReplicationOutcome,
}

/// Runs `spec.replications` means-model replications, building equal-tailed
/// `(1 - 2 zeta)` intervals for every coordinate. `sigma2` defaults to the
/// true noise variance.
pub fn coverage_experiment(
    spec: &ScenarioSpec,
    prior: &PriorConfig,
    zeta: f64,
    sigma2: Option<f64>,
) -> Result<CoverageReport> {
    spec.validate()?;
    if spec.design != Design::OrthogonalMeans {
        return Err(Error::InvalidSpec("coverage experiments need the orthogonal_means design".into()));
    }
    if !(zeta > 0.0 && zeta < 0.5) {
        return Err(Error::InvalidLevel(zeta));
    }
    let s2 = sigma2.unwrap_or(spec.sigma_true * spec.sigma_true);
    let reps: Vec<RepCoverage> = (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            let (sample, beta) = generate_scenario::<f64>(spec, r as u64)?;
            let y = match sample {
                Sample::Means { y } => y,
                Sample::Regression { .. } => unreachable!("design checked above"),
            };
            let start = Instant::now();
            let fit = fit_means(y.view(), s2, prior)?;
            let runtime_sec = start.elapsed().as_secs_f64();
            let mut covered = Vec::with_capacity(spec.n);
            let mut length = Vec::with_capacity(spec.n);
            for i in 0..spec.n {
                let (lo, hi) = coordinate_interval(&fit, i, zeta);
                covered.push(lo <= beta[i] && beta[i] <= hi);
                length.push(hi - lo);
            }
            Ok(RepCoverage {
                covered,
                length,
                phi: fit.phi.to_vec(),
                outcome: ReplicationOutcome { beta_hat: fit.beta_hat().to_vec(), s_hat: fit.selected(), runtime_sec },
            })
        })
        .collect::<Result<_>>()?;
    let r = reps.len() as f64;
    let coordinates = (0..spec.n)
        .map(|i| CoordinateCoverage {
            coordinate: i,
            beta_star: spec.beta_star[i],
            coverage: reps.iter().filter(|c| c.covered[i]).count() as f64 / r,
            mean_length: reps.iter().map(|c| c.length[i]).sum::<f64>() / r,
            mean_phi: reps.iter().map(|c| c.phi[i]).sum::<f64>() / r,
        })
        .collect();
    let (mut len_sum, mut len_cnt) = (0.0, 0usize);
    for c in &reps {
        for i in 0..spec.n {
            if c.phi[i] > 0.5 {
                len_sum += c.length[i];
                len_cnt += 1;
            }
        }
    }
    let support = spec.support();
    let signal_hits: usize = reps.iter().map(|c| support.iter().filter(|&&i| c.covered[i]).count()).sum();
    let signal_coverage =
        if support.is_empty() { f64::NAN } else { signal_hits as f64 / (support.len() as f64 * r) };
    Ok(CoverageReport {
        replications: reps.len(),
        zeta,
        coordinates,
        mean_length_selected: if len_cnt == 0 { f64::NAN } else { len_sum / len_cnt as f64 },
        signal_coverage,
        outcomes: reps.into_iter().map(|c| c.outcome).collect(),
        beta_star: spec.beta_star.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_n(1, 0.05f64), 1.0);
        assert!((lambda_n(1000, 0.0f64) - 1e-3).abs() < 1e-18);
        // 1000^-1.05 = 10^-3.15
        assert!((lambda_n(1000, 0.05f64) - 10f64.powf(-3.15)).abs() < 1e-15);
        assert!((lambda_n(1000, 0.05f64) - 7.079e-4).abs() < 1e-7);
    }

    #[test]
    fn zero_signal_floor_and_invariants() {
        let prior = PriorConfig::default();
        let y = array![0.0f64, 1.5, -3.0];
        let fit = fit_means(y.view(), 2.0, &prior).unwrap();
        let lam = lambda_n(3, 0.05f64);
        let base = (lam / (1.0 - lam)).ln() + 0.5 * (0.005f64 / 0.995).ln();
        assert_eq!(fit.logit_phi[0], base);
        assert_eq!(fit.mu, y);
        assert_eq!(fit.tau2, 2.0 / (0.99 + 0.005));
        for i in 0..3 {
            assert!((fit.logit_phi[i] - (base + 0.99 / 4.0 * y[i] * y[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn strong_signal_is_included() {
        let prior = PriorConfig::default();
        let mut y = Array1::zeros(500);
        y[0] = 10.0;
        let fit = fit_means(y.view(), 1.0, &prior).unwrap();
        assert!(fit.phi[0] > 1.0 - 1e-6);
    }

    #[test]
    fn enumeration_guard() {
        let y = Array1::<f64>::zeros(13);
        assert_eq!(
            exact_posterior_inclusion(y.view(), 1.0, &PriorConfig::default()),
            Err(Error::TooLarge { n: 13, max: 12 })
        );
    }

    #[test]
    fn enumeration_matches_closed_form_small() {
        let prior = PriorConfig::default();
        let y = array![0.0f64, 2.0, 5.0];
        let fit = fit_means(y.view(), 1.0, &prior).unwrap();
        let exact = exact_posterior_inclusion(y.view(), 1.0, &prior).unwrap();
        for i in 0..3 {
            assert!((fit.phi[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn basis_bounds_at_extremes() {
        let prior = PriorConfig::default();
        let sigma2 = 1.0;
        let mut fit = fit_means(array![3.0, 0.1].view(), sigma2, &prior).unwrap();
        fit.phi[0] = 1.0;
        fit.phi[1] = 0.0;
        let v = 1.0 / 0.995f64;
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.95);
        let ub = credible_upper_bound(&fit, &FunctionalQuery::basis(2, 0, 0.05)).unwrap();
        assert!((ub - (3.0 + z * v.sqrt())).abs() < 1e-9);
        for zeta in [0.01, 0.2, 0.49] {
            let ub0: f64 = credible_upper_bound(&fit, &FunctionalQuery::basis(2, 1, zeta)).unwrap();
            assert_eq!(ub0, 0.0);
        }
    }

    #[test]
    fn invalid_level_and_zero_functional() {
        let fit = fit_means(array![1.0, 2.0].view(), 1.0, &PriorConfig::default()).unwrap();
        for zeta in [0.0, 0.5, -0.1, 0.7] {
            assert_eq!(
                credible_upper_bound(&fit, &FunctionalQuery { w: vec![1.0, 0.0], zeta }),
                Err(Error::InvalidLevel(zeta))
            );
        }
        assert!(credible_upper_bound(&fit, &FunctionalQuery { w: vec![0.0, 0.0], zeta: 0.1 }).is_err());
    }

    #[test]
    fn dense_functional_uses_monte_carlo_close_to_exact() {
        // with phi saturated at 1 the functional is exactly Gaussian
        let prior = PriorConfig::default();
        let y = Array1::from_iter((0..30).map(|i| 10.0 + i as f64 * 0.1));
        let fit = fit_means(y.view(), 1.0, &prior).unwrap();
        let w = vec![1.0; 30];
        let ub: f64 = credible_upper_bound(&fit, &FunctionalQuery { w, zeta: 0.05 }).unwrap();
        let sd = (30.0 * fit.tau2).sqrt();
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.95);
        let exact = y.sum() + z * sd;
        assert!((ub - exact).abs() < 0.02 * sd.max(1.0), "{ub} vs {exact}");
    }
}
