//! Generalized linear models fitted when the response is observed only
//! through order statistics or histogram aggregates.
//!
//! The estimator alternates between a ridge-penalized GLM fit and a closed
//! form imputation of the individual targets that honours every order
//! statistic. Numerical code is generic over [`Scalar`] (`f32` or `f64`);
//! the `*64` aliases below fix the common double-precision case.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod dataset;
pub mod error;
pub mod family;
pub mod glm;
pub mod imputation;
pub mod inference;
mod linalg;
pub mod scalar;
pub mod simulate;
pub mod solver;

pub use aggregation::{
    quantile_ranks, recovered_histogram, summarize_blocks, summarize_targets, AggregateSummary,
    Block, HistogramCounts, OrderStatisticConstraint, SummaryScheme,
};
pub use dataset::{read_dataset, read_dataset_from, write_dataset, Dataset, DatasetOptions};
pub use error::{Error, Result, SummaryIssue};
pub use family::{FamilyKind, GlmFamily};
pub use glm::{
    fit_glm, fit_glm_from, glm_gradient, glm_objective, predict_means, Coefficients, DesignMatrix,
    GlmFit, GlmOptions,
};
pub use imputation::{impute_sorted, impute_targets, sorted_view, SortedView};
pub use inference::{
    evaluate_error, fold_assignment, granularity_sweep, permutation_p_value, permutation_test,
    replicate_permutation, BaselineRecord, PermutationTestResult, SweepConfig, SweepRecord,
    SweepResult,
};
pub use scalar::Scalar;
pub use simulate::{simulate_glm, Relationship, SimulatedData, SimulationConfig};
pub use solver::{
    alternate_fit, alternate_fit_from, initialize_targets, FitOptions, FitState, InitScheme,
};

pub type GlmFamily64 = GlmFamily<f64>;
pub type DesignMatrix64 = DesignMatrix<f64>;
pub type Coefficients64 = Coefficients<f64>;
pub type AggregateSummary64 = AggregateSummary<f64>;
pub type FitOptions64 = FitOptions<f64>;
pub type FitState64 = FitState<f64>;
pub type GlmFamily32 = GlmFamily<f32>;
pub type DesignMatrix32 = DesignMatrix<f32>;
pub type AggregateSummary32 = AggregateSummary<f32>;
pub type FitState32 = FitState<f32>;
