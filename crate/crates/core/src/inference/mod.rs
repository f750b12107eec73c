//! Likelihood, fitting, kriging, simulation and cross-validation.

mod cv;
mod data;
mod fit;
mod kriging;
mod likelihood;
mod optim;
mod simulate;

use thiserror::Error;

use crate::models::ModelError;
use crate::network::NetworkError;

pub use cv::{cross_validate, fold_assignment, CvReport, FoldResult};
pub use data::{design_matrix, group_sites, point_order, read_observations, write_observations, Dataset, Observation};
pub use fit::{bic, fit_ml, Convergence, FitOptions, FitResult, FitSpec, Transform};
pub use kriging::{crps_gaussian, krige, targets_from, Prediction, PredictionResult, Target};
pub use likelihood::{covariance_matrix, gaussian_loglik, log_likelihood, profile_beta, profile_loglik, Factor, Gls};
pub use optim::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use simulate::{derived_seed, simulate, simulate_field, substream, synthetic_dataset, SyntheticDesign};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("covariance matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design matrix has rank {rank} < {columns} columns")]
    RankDeficientDesign { rank: usize, columns: usize },
    #[error("optimiser did not converge within {evaluations} evaluations")]
    NonConvergence { evaluations: usize },
    #[error("standard deviation must be positive (got {0})")]
    NonpositiveSd(f64),
    #[error("duplicate record at site {site}, time {time}")]
    DuplicateRecord { site: String, time: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid fold setup: {0}")]
    InvalidFold(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}
