//! Configuration scoring under the inverse-gamma noise prior, the
//! noise-variance grid, and the weighted summary of the grid fits.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::LassoFit;
use crate::linalg::{gram_submatrix, Cholesky};
use crate::prior::PriorConfig;
use crate::scalar::{log_sum_exp, softmax, Real};
use crate::vb::{geometric_mean_eigs, selected_set, CaviDiagnostics, FixedSigma, GScalar, VariationalState};

/// `log binom(p, s)` as a sum of log ratios.
pub fn log_binomial<T: Real>(p: usize, s: usize) -> T {
    let s = s.min(p - s.min(p));
    (1..=s)
        .map(|i| (T::from_usize_lossy(p - s + i) / T::from_usize_lossy(i)).ln())
        .sum()
}

/// `log f_n(s)` for the size prior `f_n(s) ∝ c^-s p^-as` normalized over
/// `s = 0..=cap`.
pub fn log_size_prior<T: Real>(s: usize, p: usize, cap: usize, prior: &PriorConfig) -> T {
    let rate = T::lit(prior.c).ln() + T::lit(prior.a) * T::from_usize_lossy(p).ln();
    let terms: Vec<T> = (0..=cap).map(|t| -rate * T::from_usize_lossy(t)).collect();
    -rate * T::from_usize_lossy(s) - log_sum_exp(&terms)
}

/// Residual sum of squares of the least-squares fit on the columns `s`.
pub fn least_squares_rss<T: Real>(data: &Dataset<T>, s: &[usize]) -> Result<T> {
    if s.is_empty() {
        return Ok(data.y.dot(&data.y));
    }
    let gram = gram_submatrix(data.x.view(), s);
    let rhs = Array1::from_iter(s.iter().map(|&j| data.x.column(j).dot(&data.y)));
    let chol = match Cholesky::new(&gram) {
        Some(c) => c,
        None => {
            let jitter = T::lit(1e-10) * T::from_usize_lossy(data.n());
            log::info!("Cholesky of X_S^T X_S failed for |S| = {}; retrying with jitter {jitter}", s.len());
            let mut g = gram.clone();
            for i in 0..s.len() {
                g[[i, i]] = g[[i, i]] + jitter;
            }
            Cholesky::new(&g).ok_or_else(|| Error::SingularSubmatrix(s.to_vec()))?
        }
    };
    let coef = chol.solve(&rhs);
    let mut resid = data.y.clone();
    for (&j, &b) in s.iter().zip(coef.iter()) {
        resid.scaled_add(-b, &data.x.column(j));
    }
    Ok(resid.dot(&resid))
}

/// Log of the unnormalized marginal posterior of configuration `s`:
/// `log pi(S) + |S|/2 log(gamma/(alpha+gamma)) - (a0 + alpha n/2) log(b0 + alpha/2 ||y - y_S||^2)`
/// with `pi(S) = binom(p, |S|)^-1 f_n(|S|)`.
pub fn log_config_score<T: Real>(data: &Dataset<T>, s: &[usize], prior: &PriorConfig) -> Result<T> {
    let (n, p) = (data.n(), data.p());
    if s.len() > n {
        return Err(Error::SizeOverCap { size: s.len(), cap: n });
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != s.len() || sorted.last().is_some_and(|&j| j >= p) {
        return Err(Error::InvalidInput(format!("configuration {s:?} is not a set of column indices")));
    }
    let rss = least_squares_rss(data, &sorted)?;
    let k = T::from_usize_lossy(s.len());
    let (alpha, gamma) = (T::lit(prior.alpha), T::lit(prior.gamma));
    let half = T::lit(0.5);
    let log_prior = log_size_prior::<T>(s.len(), p, n, prior) - log_binomial::<T>(p, s.len());
    let shape = T::lit(prior.a0) + alpha * T::from_usize_lossy(n) * half;
    Ok(log_prior + half * k * (gamma / (alpha + gamma)).ln() - shape * (T::lit(prior.b0) + half * alpha * rss).ln())
}

/// Per-grid-point results of the fixed-variance fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GridFit<T> {
    pub sigma2_grid: Vec<T>,
    pub states: Vec<VariationalState<T>>,
    pub selected_sets: Vec<Vec<usize>>,
    pub log_weights: Vec<T>,
    pub weights: Vec<T>,
    pub diagnostics: Vec<CaviDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FitResult<T> {
    pub mu: Array1<T>,
    pub tau2: Array1<T>,
    pub phi: Array1<T>,
    /// `phi ∘ mu` on the standardized scale.
    pub beta_hat: Array1<T>,
    pub beta_hat_raw: Array1<T>,
    pub intercept_raw: T,
    pub s_hat: Vec<usize>,
    pub g_tilde: T,
    pub grid: GridFit<T>,
    pub lasso: LassoFit<T>,
    pub prior: PriorConfig,
}

fn weighted_average<T: Real>(weights: &[T], items: impl Iterator<Item = Array1<T>>) -> Array1<T> {
    let mut acc: Option<Array1<T>> = None;
    for (w, v) in weights.iter().zip(items) {
        match acc.as_mut() {
            None => acc = Some(v * *w),
            Some(a) => a.scaled_add(*w, &v),
        }
    }
    acc.expect("at least one grid point")
}

/// Runs the fixed-variance fits over the noise-variance grid anchored at
/// `lasso.sigma2_hat`, scores each selected configuration and returns the
/// weighted averages.
pub fn fit_vb_empirical<T: Real>(data: &Dataset<T>, prior: &PriorConfig, lasso: &LassoFit<T>) -> Result<FitResult<T>> {
    prior.validate()?;
    if lasso.beta_tilde.len() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), found: lasso.beta_tilde.len() });
    }
    let g = geometric_mean_eigs(data, &lasso.active_set)?;
    let grid: Vec<T> = prior.sigma2_grid(lasso.sigma2_hat.to_f64_lossy()).into_iter().map(T::lit).collect();
    let runs: Vec<(VariationalState<T>, CaviDiagnostics, Vec<usize>, T)> = grid
        .par_iter()
        .map(|&s2| {
            let problem = FixedSigma::new(data, prior, s2, g, lasso.beta_tilde.view())?;
            let (state, diag) = problem.run(problem.initial_state()?)?;
            let sel = state.selected();
            let lw = match log_config_score(data, &sel, prior) {
                Ok(v) => v,
                // sizes beyond the prior's support carry zero mass
                Err(Error::SizeOverCap { .. }) => T::neg_infinity(),
                Err(e) => return Err(e),
            };
            Ok((state, diag, sel, lw))
        })
        .collect::<Result<_>>()?;
    let log_weights: Vec<T> = runs.iter().map(|r| r.3).collect();
    let weights = softmax(&log_weights).ok_or(Error::AllWeightsDegenerate)?;
    let mu = weighted_average(&weights, runs.iter().map(|r| r.0.mu.clone()));
    let tau2 = weighted_average(&weights, runs.iter().map(|r| r.0.tau2.clone()));
    let phi = weighted_average(&weights, runs.iter().map(|r| r.0.phi.clone()));
    let (states, diagnostics, selected_sets): (Vec<_>, Vec<_>, Vec<_>) =
        runs.into_iter().map(|(s, d, sel, _)| (s, d, sel)).fold((vec![], vec![], vec![]), |mut acc, (s, d, sel)| {
            acc.0.push(s);
            acc.1.push(d);
            acc.2.push(sel);
            acc
        });
    Ok(assemble(
        data,
        mu,
        tau2,
        phi,
        g,
        GridFit { sigma2_grid: grid, states, selected_sets, log_weights, weights, diagnostics },
        lasso.clone(),
        prior.clone(),
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Real>(
    data: &Dataset<T>,
    mu: Array1<T>,
    tau2: Array1<T>,
    phi: Array1<T>,
    g: GScalar<T>,
    grid: GridFit<T>,
    lasso: LassoFit<T>,
    prior: PriorConfig,
) -> FitResult<T> {
    let beta_hat = &phi * &mu;
    let (intercept_raw, beta_hat_raw) = data.to_raw_coefficients(beta_hat.view());
    let s_hat = selected_set(phi.view());
    FitResult { mu, tau2, phi, beta_hat, beta_hat_raw, intercept_raw, s_hat, g_tilde: g.0, grid, lasso, prior }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointSummary {
    pub sigma2: f64,
    pub weight: f64,
    pub log_weight: Option<f64>,
    pub selected_size: usize,
    pub sweeps: usize,
    pub converged: bool,
}

/// The serializable report of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub s_hat: Vec<usize>,
    pub beta_hat: Vec<f64>,
    pub intercept: f64,
    pub phi: Vec<f64>,
    pub weights: Vec<f64>,
    pub sigma2_hat: f64,
    pub lasso_lambda: f64,
    pub lasso_active_set: Vec<usize>,
    pub g_tilde: f64,
    pub grid: Vec<GridPointSummary>,
}

pub fn summarize<T: Real>(fit: &FitResult<T>) -> FitSummary {
    let f = |v: ArrayView1<'_, T>| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
    let g = &fit.grid;
    FitSummary {
        s_hat: fit.s_hat.clone(),
        beta_hat: f(fit.beta_hat_raw.view()),
        intercept: fit.intercept_raw.to_f64_lossy(),
        phi: f(fit.phi.view()),
        weights: g.weights.iter().map(|w| w.to_f64_lossy()).collect(),
        sigma2_hat: fit.lasso.sigma2_hat.to_f64_lossy(),
        lasso_lambda: fit.lasso.lambda.to_f64_lossy(),
        lasso_active_set: fit.lasso.active_set.clone(),
        g_tilde: fit.g_tilde.to_f64_lossy(),
        grid: (0..g.sigma2_grid.len())
            .map(|l| GridPointSummary {
                sigma2: g.sigma2_grid[l].to_f64_lossy(),
                weight: g.weights[l].to_f64_lossy(),
                log_weight: Some(g.log_weights[l].to_f64_lossy()).filter(|v| v.is_finite()),
                selected_size: g.selected_sets[l].len(),
                sweeps: g.diagnostics[l].sweeps.len(),
                converged: g.diagnostics[l].converged,
            })
            .collect(),
    }
}
