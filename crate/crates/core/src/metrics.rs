//! Replication-level summaries of a simulation run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What one replication of a method produced, on the raw coefficient scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub beta_hat: Vec<f64>,
    pub s_hat: Vec<usize>,
    pub runtime_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub method: String,
    pub replications: usize,
    pub l2_mean: f64,
    /// Sample standard deviation of the per-replication l2 errors.
    pub l2_se: f64,
    pub mean_model_size: f64,
    pub p_superset: f64,
    pub p_exact: f64,
    pub runtime_sec_mean: f64,
}

impl MetricsReport {
    /// CSV columns; runtime is left out so the file is reproducible.
    pub const CSV_HEADER: [&'static str; 8] =
        ["scenario", "method", "replications", "l2_mean", "l2_se", "mean_model_size", "p_superset", "p_exact"];

    pub fn csv_record(&self) -> [String; 8] {
        [
            self.scenario.clone(),
            self.method.clone(),
            self.replications.to_string(),
            self.l2_mean.to_string(),
            self.l2_se.to_string(),
            self.mean_model_size.to_string(),
            self.p_superset.to_string(),
            self.p_exact.to_string(),
        ]
    }
}

/// Aggregates per-replication outcomes against the true coefficient vectors
/// (one per replication).
pub fn compute_metrics(
    scenario: &str,
    method: &str,
    outcomes: &[ReplicationOutcome],
    beta_star: &[Vec<f64>],
) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if beta_star.len() != outcomes.len() {
        return Err(Error::DimensionMismatch { expected: outcomes.len(), found: beta_star.len() });
    }
    let r = outcomes.len() as f64;
    let mut l2 = Vec::with_capacity(outcomes.len());
    let (mut superset, mut exact, mut size) = (0usize, 0usize, 0usize);
    for (o, truth) in outcomes.iter().zip(beta_star) {
        if o.beta_hat.len() != truth.len() {
            return Err(Error::DimensionMismatch { expected: truth.len(), found: o.beta_hat.len() });
        }
        l2.push(o.beta_hat.iter().zip(truth).map(|(b, t)| (b - t) * (b - t)).sum::<f64>().sqrt());
        let support: Vec<usize> = truth.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        let mut s_hat = o.s_hat.clone();
        s_hat.sort_unstable();
        s_hat.dedup();
        if support.iter().all(|j| s_hat.binary_search(j).is_ok()) {
            superset += 1;
            if s_hat.len() == support.len() {
                exact += 1;
            }
        }
        size += s_hat.len();
    }
    let l2_mean = l2.iter().sum::<f64>() / r;
    let l2_se = if outcomes.len() > 1 {
        (l2.iter().map(|e| (e - l2_mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MetricsReport {
        scenario: scenario.to_string(),
        method: method.to_string(),
        replications: outcomes.len(),
        l2_mean,
        l2_se,
        mean_model_size: size as f64 / r,
        p_superset: superset as f64 / r,
        p_exact: exact as f64 / r,
        runtime_sec_mean: outcomes.iter().map(|o| o.runtime_sec).sum::<f64>() / r,
    })
}
