//! Coordinate-ascent variational inference at a fixed noise variance.
//!
//! Each coordinate `j` carries the mixture `phi_j N(mu_j, tau2_j) + (1 - phi_j) delta_0`.
//! A sweep visits coordinates in a fixed prioritized order and updates
//! `(mu_j, tau2_j, phi_j)` Gauss-Seidel style. The inner product
//! `sum_{k != j} (X^T X)_{jk} phi_k mu_k` is read off a cached `X (phi ∘ mu)`,
//! so a sweep costs `O(np)` and never forms `X^T X`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{gram_submatrix, symmetric_eigenvalues};
use crate::prior::{InclusionUpdate, PriorConfig};
use crate::scalar::{sigmoid, Real};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 35.0;
/// Inclusion probabilities are kept inside `[PHI_EPS, 1 - PHI_EPS]`.
pub const PHI_EPS: f64 = 1e-12;
/// Logits beyond this are reported as overflow (then clamped).
const LOGIT_OVERFLOW: f64 = 700.0;
const CACHE_REFRESH_EVERY: usize = 50;

/// Geometric mean of the eigenvalues of `X_S^T X_S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GScalar<T>(pub T);

impl<T: Real> GScalar<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// `exp(mean(log eig(X_S^T X_S)))`; the empty set maps to `n`.
pub fn geometric_mean_eigs<T: Real>(data: &Dataset<T>, s: &[usize]) -> Result<GScalar<T>> {
    let n = data.n();
    if s.is_empty() {
        return Ok(GScalar(T::from_usize_lossy(n)));
    }
    if s.len() > n {
        return Err(Error::SizeOverCap { size: s.len(), cap: n });
    }
    let gram = gram_submatrix(data.x.view(), s);
    let eig = symmetric_eigenvalues(&gram);
    if !(eig[0] > T::lit(1e-10) * T::from_usize_lossy(n)) {
        return Err(Error::SingularSubmatrix(s.to_vec()));
    }
    let mean_log = eig.iter().map(|e| e.ln()).sum::<T>() / T::from_usize_lossy(eig.len());
    Ok(GScalar(mean_log.exp()))
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn entropy<T: Real>(phi: T) -> Result<T> {
    if !(phi >= T::zero() && phi <= T::one()) {
        return Err(Error::DomainError(phi.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(entropy_unchecked(phi))
}

#[inline]
fn xlog2x<T: Real>(v: T) -> T {
    if v > T::zero() {
        v * v.log2()
    } else {
        T::zero()
    }
}

#[inline]
fn entropy_unchecked<T: Real>(phi: T) -> T {
    -(xlog2x(phi) + xlog2x(T::one() - phi))
}

#[inline]
fn xlnx<T: Real>(v: T) -> T {
    if v > T::zero() {
        v * v.ln()
    } else {
        T::zero()
    }
}

/// Variational parameters plus the running value of `X (phi ∘ mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VariationalState<T> {
    pub mu: Array1<T>,
    pub tau2: Array1<T>,
    pub phi: Array1<T>,
    pub r_cache: Array1<T>,
    pub sweep_count: usize,
}

impl<T: Real> VariationalState<T> {
    pub fn new(data: &Dataset<T>, mu: Array1<T>, tau2: Array1<T>, phi: Array1<T>) -> Result<Self> {
        let p = data.p();
        for len in [mu.len(), tau2.len(), phi.len()] {
            if len != p {
                return Err(Error::DimensionMismatch { expected: p, found: len });
            }
        }
        if phi.iter().any(|&f| !(f >= T::zero() && f <= T::one())) {
            return Err(Error::InvalidInput("phi must lie in [0, 1]".into()));
        }
        if tau2.iter().any(|&t| !(t > T::zero())) {
            return Err(Error::InvalidInput("tau2 must be positive".into()));
        }
        let r_cache = data.x.dot(&(&phi * &mu));
        Ok(Self { mu, tau2, phi, r_cache, sweep_count: 0 })
    }

    pub fn beta_hat(&self) -> Array1<T> {
        &self.phi * &self.mu
    }

    /// Indices with `phi_j > 1/2`.
    pub fn selected(&self) -> Vec<usize> {
        selected_set(self.phi.view())
    }

    pub fn refresh_cache(&mut self, data: &Dataset<T>) {
        self.r_cache = data.x.dot(&self.beta_hat());
    }

    /// `|| r_cache - X (phi ∘ mu) ||_inf`.
    pub fn cache_error(&self, data: &Dataset<T>) -> T {
        let fresh = data.x.dot(&self.beta_hat());
        (&fresh - &self.r_cache).iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

pub fn selected_set<T: Real>(phi: ArrayView1<'_, T>) -> Vec<usize> {
    let half = T::lit(0.5);
    phi.iter().enumerate().filter(|(_, f)| **f > half).map(|(j, _)| j).collect()
}

/// Coordinates by decreasing `|mu|`, ties by ascending index.
pub fn prioritized_order<T: Real>(mu: ArrayView1<'_, T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| {
        mu[b].abs().partial_cmp(&mu[a].abs()).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub max_entropy_delta: f64,
    pub surrogate_elbo: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CaviDiagnostics {
    pub sweeps: Vec<SweepRecord>,
    pub converged: bool,
}

impl CaviDiagnostics {
    /// One JSON object per sweep, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for rec in &self.sweeps {
            out.push_str(&serde_json::to_string(rec).expect("plain record"));
            out.push('\n');
        }
        out
    }
}

/// Everything a fixed-variance CAVI run needs besides the state.
#[derive(Debug, Clone)]
pub struct FixedSigma<'a, T> {
    data: &'a Dataset<T>,
    prior: &'a PriorConfig,
    beta_tilde: ArrayView1<'a, T>,
    xty: Array1<T>,
    col_sq: Array1<T>,
    sigma2: T,
    g: T,
    nf: T,
    alpha: T,
    gamma: T,
}

impl<'a, T: Real> FixedSigma<'a, T> {
    pub fn new(
        data: &'a Dataset<T>,
        prior: &'a PriorConfig,
        sigma2: T,
        g: GScalar<T>,
        beta_tilde: ArrayView1<'a, T>,
    ) -> Result<Self> {
        if !(sigma2 > T::zero()) {
            return Err(Error::InvalidInput("sigma2 must be positive".into()));
        }
        if beta_tilde.len() != data.p() {
            return Err(Error::DimensionMismatch { expected: data.p(), found: beta_tilde.len() });
        }
        Ok(Self {
            data,
            prior,
            beta_tilde,
            xty: data.xty(),
            col_sq: data.col_sq_norms(),
            sigma2,
            g: g.0,
            nf: T::from_usize_lossy(data.n()),
            alpha: T::lit(prior.alpha),
            gamma: T::lit(prior.gamma),
        })
    }

    /// `sigma^2 / (n (alpha + gamma))`, shared by every coordinate.
    pub fn tau2(&self) -> T {
        self.sigma2 / (self.nf * (self.alpha + self.gamma))
    }

    /// The initialization used by the grid fit: `mu = beta~`, `phi = 1/2`,
    /// `tau2` at its fixed point.
    pub fn initial_state(&self) -> Result<VariationalState<T>> {
        let p = self.data.p();
        VariationalState::new(
            self.data,
            self.beta_tilde.to_owned(),
            Array1::from_elem(p, self.tau2()),
            Array1::from_elem(p, T::lit(0.5)),
        )
    }

    fn log_prior_odds_const(&self) -> T {
        let p = T::from_usize_lossy(self.data.p());
        T::lit(0.5) * (self.gamma * self.g / (self.nf * (self.alpha + self.gamma))).ln()
            - T::lit(self.prior.c).ln()
            - T::lit(self.prior.a) * p.ln()
    }

    /// One Gauss-Seidel pass over `order`.
    pub fn sweep(&self, state: &mut VariationalState<T>, order: &[usize]) -> Result<()> {
        let gg = self.gamma * self.g;
        let shrink = gg / self.alpha;
        let denom = self.nf + shrink;
        let tau2 = self.tau2();
        let base = self.log_prior_odds_const();
        let quad = self.nf * self.alpha / T::lit(2.0) + gg;
        let half = T::lit(0.5);
        let clamp = T::lit(LOGIT_CLAMP);
        let (phi_lo, phi_hi) = (T::lit(PHI_EPS), T::one() - T::lit(PHI_EPS));
        for &j in order {
            let col = self.data.x.column(j);
            let old = state.phi[j] * state.mu[j];
            let cross = col.dot(&state.r_cache) - self.col_sq[j] * old;
            let bt = self.beta_tilde[j];
            let mu = (self.xty[j] - cross + shrink * bt) / denom;
            let dev = mu - bt;
            let mut logit = base + quad * mu * mu / self.sigma2 - half * gg * dev * dev / self.sigma2;
            if self.prior.inclusion_update == InclusionUpdate::Stationary {
                logit = logit - gg * mu * bt / self.sigma2;
            }
            if logit.is_nan() || mu.is_nan() {
                return Err(Error::NumericalOverflow(format!("NaN in update of coordinate {j}")));
            }
            if logit.abs() > T::lit(LOGIT_OVERFLOW) {
                log::trace!("logit {logit} for coordinate {j} clamped");
            }
            let phi = sigmoid(logit.max(-clamp).min(clamp)).max(phi_lo).min(phi_hi);
            state.mu[j] = mu;
            state.tau2[j] = tau2;
            state.phi[j] = phi;
            let new = phi * mu;
            if new != old {
                state.r_cache.scaled_add(new - old, &col);
            }
        }
        state.sweep_count += 1;
        Ok(())
    }

    /// The approximate evidence lower bound with the binomial term dropped
    /// and `X_S^T X_S` summarized by `g`. Uses the state's cached `X (phi ∘ mu)`.
    pub fn surrogate_elbo(&self, state: &VariationalState<T>) -> T {
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let s2 = self.sigma2;
        let ln2pi = T::lit(std::f64::consts::TAU.ln());
        let p = T::from_usize_lossy(self.data.p());
        let per_include = half * (self.gamma * self.g).ln()
            - (half * s2.ln() + half * ln2pi + T::lit(self.prior.c).ln() + T::lit(self.prior.a) * p.ln());
        let mut total = T::zero();
        let mut diag = T::zero();
        for j in 0..self.data.p() {
            let (mu, tau2, phi) = (state.mu[j], state.tau2[j], state.phi[j]);
            let b = phi * mu;
            diag = diag + self.col_sq[j] * b * b;
            let dev = mu - self.beta_tilde[j];
            let lik = -self.alpha / (two * s2) * (self.nf * phi * (tau2 + mu * mu) - two * b * self.xty[j]);
            let pri = -self.gamma / (two * s2) * (self.nf * tau2 * phi + self.g * phi * dev * dev);
            let ent = -xlnx(T::one() - phi) - xlnx(phi) + phi * (half * ln2pi + half * tau2.ln() + half);
            total = total + lik + pri + ent + phi * per_include;
        }
        let cross = state.r_cache.dot(&state.r_cache) - diag;
        total - self.alpha / (two * s2) * cross
    }

    /// Repeats sweeps in the order fixed by the initial `|mu|` until the
    /// largest per-coordinate entropy change falls below `delta`.
    pub fn run(&self, init: VariationalState<T>) -> Result<(VariationalState<T>, CaviDiagnostics)> {
        let mut state = init;
        let order = prioritized_order(state.mu.view());
        let delta = T::lit(self.prior.delta);
        let mut diag = CaviDiagnostics::default();
        let mut h_old: Vec<T> = state.phi.iter().map(|&f| entropy_unchecked(f)).collect();
        for k in 1..=self.prior.max_sweeps {
            self.sweep(&mut state, &order)?;
            if k % CACHE_REFRESH_EVERY == 0 {
                state.refresh_cache(self.data);
            }
            let mut max_dh = T::zero();
            for (h, &f) in h_old.iter_mut().zip(state.phi.iter()) {
                let hn = entropy_unchecked(f);
                max_dh = max_dh.max((hn - *h).abs());
                *h = hn;
            }
            diag.sweeps.push(SweepRecord {
                sweep: k,
                max_entropy_delta: max_dh.to_f64_lossy(),
                surrogate_elbo: self.surrogate_elbo(&state).to_f64_lossy(),
            });
            if max_dh < delta {
                diag.converged = true;
                return Ok((state, diag));
            }
        }
        log::warn!(
            "CAVI at sigma2 = {} hit the sweep cap of {} without meeting delta = {}",
            self.sigma2,
            self.prior.max_sweeps,
            self.prior.delta
        );
        Ok((state, diag))
    }
}

/// Applies one sweep in `order` and returns the updated state.
pub fn cavi_sweep<T: Real>(
    mut state: VariationalState<T>,
    data: &Dataset<T>,
    prior: &PriorConfig,
    sigma2: T,
    g: GScalar<T>,
    beta_tilde: ArrayView1<'_, T>,
    order: &[usize],
) -> Result<VariationalState<T>> {
    let problem = FixedSigma::new(data, prior, sigma2, g, beta_tilde)?;
    problem.sweep(&mut state, order)?;
    Ok(state)
}

pub fn cavi_fixed_sigma<T: Real>(
    data: &Dataset<T>,
    prior: &PriorConfig,
    sigma2: T,
    g: GScalar<T>,
    beta_tilde: ArrayView1<'_, T>,
    init: VariationalState<T>,
) -> Result<(VariationalState<T>, CaviDiagnostics)> {
    FixedSigma::new(data, prior, sigma2, g, beta_tilde)?.run(init)
}

pub fn surrogate_elbo<T: Real>(
    state: &VariationalState<T>,
    data: &Dataset<T>,
    prior: &PriorConfig,
    sigma2: T,
    g: GScalar<T>,
    beta_tilde: ArrayView1<'_, T>,
) -> Result<T> {
    Ok(FixedSigma::new(data, prior, sigma2, g, beta_tilde)?.surrogate_elbo(state))
}
