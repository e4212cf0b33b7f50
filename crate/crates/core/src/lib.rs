//! Variational empirical-Bayes fitting for sparse high-dimensional linear
//! regression.
//!
//! The pipeline standardizes the data, fits a cross-validated lasso, and
//! runs coordinate-ascent variational inference for a spike-and-slab model
//! whose slab is centred at the lasso solution. The noise variance is
//! handled by fitting on a grid and averaging with weights from the
//! marginal posterior of each selected configuration.
//!
//! ```
//! use ndarray::{Array1, Array2};
//! use vbsparse::{fit, PriorConfig};
//!
//! let x = Array2::from_shape_fn((40, 6), |(i, j)| ((i * 7 + j * 13) % 11) as f64 - 5.0 + (i * j % 3) as f64);
//! let y: Array1<f64> = x.column(0).mapv(|v| 3.0 * v) + Array1::from_shape_fn(40, |i| ((i % 5) as f64 - 2.0) * 0.1);
//! let result = fit(x.view(), y.view(), &PriorConfig::default()).unwrap();
//! assert!(result.s_hat.contains(&0));
//! ```

pub mod data;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod posterior;
pub mod prior;
pub mod scalar;
pub mod seqmodel;
pub mod simulate;
pub mod vb;

use ndarray::{ArrayView1, ArrayView2};

pub use data::{find_scenario, generate_scenario, read_csv, scenario_catalog, standardize, Dataset, Design, Sample, ScenarioSpec};
pub use error::{Error, Result};
pub use lasso::{lasso_fit, CvRule, Lambda, LassoFit, LassoOptions};
pub use metrics::{compute_metrics, MetricsReport, ReplicationOutcome};
pub use posterior::{fit_vb_empirical, log_config_score, summarize, FitResult, FitSummary};
pub use prior::{InclusionUpdate, PriorConfig};
pub use scalar::Real;
pub use seqmodel::{credible_interval, credible_upper_bound, fit_means, CoverageReport, FunctionalQuery, MeansFit};
pub use simulate::{run_scenario, SimulationRun};
pub use vb::{cavi_fixed_sigma, cavi_sweep, surrogate_elbo, CaviDiagnostics, GScalar, VariationalState};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type LassoFit64 = LassoFit<f64>;
pub type MeansFit64 = MeansFit<f64>;
pub type VariationalState64 = VariationalState<f64>;

/// Standardizes, fits the cross-validated lasso and runs the grid of
/// variational fits.
pub fn fit<T: Real>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, prior: &PriorConfig) -> Result<FitResult<T>> {
    let data = standardize(x, y)?;
    let lasso = lasso_fit(&data, Lambda::Auto, &LassoOptions::default())?;
    fit_vb_empirical(&data, prior, &lasso)
}
