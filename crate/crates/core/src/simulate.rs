//! Monte Carlo replications of a scenario and their summaries.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_scenario, standardize, Design, Sample, ScenarioSpec};
use crate::error::Result;
use crate::lasso::{lasso_fit, Lambda, LassoOptions};
use crate::metrics::{compute_metrics, MetricsReport, ReplicationOutcome};
use crate::posterior::fit_vb_empirical;
use crate::prior::PriorConfig;
use crate::seqmodel::{coverage_experiment, CoverageReport};

pub const VB_METHOD: &str = "vb_empirical";
pub const LASSO_METHOD: &str = "lasso";

/// Credible level used for the means-model intervals: equal tails of 2.5%.
pub const COVERAGE_ZETA: f64 = 0.025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub metrics: Vec<MetricsReport>,
    pub coverage: Option<CoverageReport>,
}

struct RegressionRep {
    vb: ReplicationOutcome,
    lasso: ReplicationOutcome,
    beta_star: Vec<f64>,
}

fn regression_replication(spec: &ScenarioSpec, rep: u64, prior: &PriorConfig, opts: &LassoOptions) -> Result<RegressionRep> {
    let (sample, beta) = generate_scenario::<f64>(spec, rep)?;
    let Sample::Regression { x, y } = sample else { unreachable!("regression design") };
    let start = Instant::now();
    let data = standardize(x.view(), y.view())?;
    let lasso = lasso_fit(&data, Lambda::Auto, opts)?;
    let lasso_time = start.elapsed().as_secs_f64();
    let fit = fit_vb_empirical(&data, prior, &lasso)?;
    let vb_time = start.elapsed().as_secs_f64();
    let (_, lasso_raw) = data.to_raw_coefficients(lasso.beta_tilde.view());
    Ok(RegressionRep {
        vb: ReplicationOutcome { beta_hat: fit.beta_hat_raw.to_vec(), s_hat: fit.s_hat, runtime_sec: vb_time },
        lasso: ReplicationOutcome { beta_hat: lasso_raw.to_vec(), s_hat: lasso.active_set, runtime_sec: lasso_time },
        beta_star: beta.to_vec(),
    })
}

/// Runs every replication of `spec`. Regression scenarios report the
/// variational fit and its lasso initializer; means scenarios report the
/// closed-form fit with known noise variance plus per-coordinate coverage.
/// Results do not depend on the number of worker threads.
pub fn run_scenario(name: &str, spec: &ScenarioSpec, prior: &PriorConfig, opts: &LassoOptions) -> Result<SimulationRun> {
    spec.validate()?;
    prior.validate()?;
    match spec.design {
        Design::GaussianAr1 => {
            let reps: Vec<RegressionRep> = (0..spec.replications as u64)
                .into_par_iter()
                .map(|r| regression_replication(spec, r, prior, opts))
                .collect::<Result<_>>()?;
            let truth: Vec<Vec<f64>> = reps.iter().map(|r| r.beta_star.clone()).collect();
            let (vb, lasso): (Vec<_>, Vec<_>) = reps.into_iter().map(|r| (r.vb, r.lasso)).unzip();
            Ok(SimulationRun {
                metrics: vec![
                    compute_metrics(name, VB_METHOD, &vb, &truth)?,
                    compute_metrics(name, LASSO_METHOD, &lasso, &truth)?,
                ],
                coverage: None,
            })
        }
        Design::OrthogonalMeans => {
            let report = coverage_experiment(spec, prior, COVERAGE_ZETA, None)?;
            let truth = vec![report.beta_star.clone(); report.outcomes.len()];
            let metrics = vec![compute_metrics(name, VB_METHOD, &report.outcomes, &truth)?];
            Ok(SimulationRun { metrics, coverage: Some(report) })
        }
    }
}
