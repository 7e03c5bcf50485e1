//! Long-run variance estimation for stationary random fields on
//! q-dimensional integer grids.
//!
//! The crate provides, for p-variate fields observed on rectangular
//! grids:
//!
//! - sample autocovariances and kernel-weighted lag-sum estimators of
//!   the asymptotic (long-run) variance, including hard-threshold
//!   (cut-off) variants and a temporally centered variant
//!   ([`estimators`]);
//! - block-subsampling machinery: sampling distributions, quantiles,
//!   subsampled RMSE/mean diagnostics, a sequential box-selection
//!   procedure, and threshold-exponent tuning ([`subsample`]);
//! - seeded simulation models with closed-form variance oracles
//!   ([`models`]);
//! - a standardized partial-sum significance test for image data and
//!   Monte Carlo experiment harnesses ([`inference`], [`mc`]).
//!
//! Everything is deterministic given a seed, single-allocation-clean
//! in hot paths, and safe to drive concurrently (fields are immutable
//! after construction).

pub mod cut;
pub mod error;
pub mod estimators;
pub mod field;
pub mod inference;
pub mod kernels;
pub mod mc;
pub mod models;
pub mod subsample;

pub use cut::{cut_threshold, CutRule, DEFAULT_DELTA};
pub use error::{Error, Result};
pub use estimators::{
    grand_mean, lrv_estimate, lrv_estimate_centered, sample_autocov, threshold_lrv,
    VarianceEstimate,
};
pub use field::{lag_box, overlap_count, ring_lags, CovMatrix, Field, Lag, Reference};
pub use inference::{
    image_test, inv_normal_cdf, partial_sum, type1_error_experiment, type1_error_sweep, TestResult,
};
pub use kernels::{weight, weight_1d, KernelSpec};
pub use mc::{mc_experiment, ExperimentReport, ReportRow};
pub use models::{simulate, ModelSpec, SeedSpec};
pub use subsample::{
    empirical_distribution, ring_confidence_interval, ring_statistic, select_m, subsample_mean,
    subsample_mean_rmse, subsample_quantile, subsample_rmse, subsample_rmse_centered,
    subsample_values, tune_alpha, tune_alpha_report, SamplingDistribution, SubsampleGrid,
    TuneReport,
};
