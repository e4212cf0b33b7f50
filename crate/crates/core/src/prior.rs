use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which inclusion-probability update the coordinate sweep applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionUpdate {
    /// `logit phi = 1/2 log(gamma g / (n(alpha+gamma))) + (n alpha/2 + gamma g) mu^2 / sigma^2
    ///  - gamma g (mu - beta~)^2 / (2 sigma^2) - log c - a log p`.
    #[default]
    Standard,
    /// The stationary point of the surrogate objective in `phi`; differs from
    /// `Standard` by the extra term `-gamma g mu beta~ / sigma^2`.
    Stationary,
}

/// Hyperparameters of the empirical prior and the fitting procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Exponent in the size prior `f_n(s) ∝ c^-s p^-as`.
    pub a: f64,
    /// Base in the size prior.
    pub c: f64,
    /// Likelihood power.
    pub alpha: f64,
    /// Prior precision scale.
    pub gamma: f64,
    /// Inverse-gamma shape for the noise variance.
    pub a0: f64,
    /// Inverse-gamma scale for the noise variance.
    pub b0: f64,
    /// Entropy-change stopping threshold.
    pub delta: f64,
    /// Number of noise-variance grid points.
    #[serde(rename = "L")]
    pub grid_len: usize,
    /// Grid endpoints as fractions of the lasso variance estimate.
    pub grid_lo_frac: f64,
    pub grid_hi_frac: f64,
    pub max_sweeps: usize,
    pub inclusion_update: InclusionUpdate,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            a: 0.05,
            c: 1.0,
            alpha: 0.99,
            gamma: 0.005,
            a0: 1.0,
            b0: 1.0,
            delta: 1e-4,
            grid_len: 10,
            grid_lo_frac: 0.2,
            grid_hi_frac: 1.8,
            max_sweeps: 500,
            inclusion_update: InclusionUpdate::Standard,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("c", self.c),
            ("gamma", self.gamma),
            ("a0", self.a0),
            ("b0", self.b0),
            ("delta", self.delta),
            ("grid_lo_frac", self.grid_lo_frac),
            ("grid_hi_frac", self.grid_hi_frac),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.grid_len == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidInput("L and max_sweeps must be at least 1".into()));
        }
        if self.grid_hi_frac < self.grid_lo_frac {
            return Err(Error::InvalidInput("grid_hi_frac must not be below grid_lo_frac".into()));
        }
        Ok(())
    }

    /// The noise-variance grid anchored at `sigma2_hat`: `L` equally spaced
    /// points on `[lo, hi] * sigma2_hat`; a single point sits at the midpoint.
    pub fn sigma2_grid(&self, sigma2_hat: f64) -> Vec<f64> {
        let lo = self.grid_lo_frac * sigma2_hat;
        let hi = self.grid_hi_frac * sigma2_hat;
        if self.grid_len == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (self.grid_len - 1) as f64;
        (0..self.grid_len).map(|l| lo + step * l as f64).collect()
    }
}
