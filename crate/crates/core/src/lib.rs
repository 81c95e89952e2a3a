//! Robust mean estimation by outlier-indicator sparsity relaxations.
//!
//! The estimator looks for the fewest samples whose removal leaves a point
//! set with bounded scatter `lambda_max(sum_i (1 - h_i)(y_i - x)(y_i - x)^T) <= c1^2 n sigma^2`,
//! relaxing the count to l1 or lp norms and alternating with mean updates.

pub mod baselines;
pub mod datagen;
mod dataset;
mod error;
pub mod estimator;
pub mod harness;
pub mod solvers;
pub mod spectral;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimator::{
    robust_mean, threshold_support, update_mean, EstimateResult, EstimatorConfig, Method, MomentBound,
    OutlierIndicator, Termination,
};
pub use solvers::{IrlsConfig, IrlsVariant, PackingInstance, PsdFactor, SolverOptions, SolverReport};
pub use spectral::{EigPair, SymMatrix};
