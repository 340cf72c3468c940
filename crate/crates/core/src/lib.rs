//! Variable selection for principal components analysis by blinding.
//!
//! After a PCA has been run on all p variables, this library searches for a
//! small subset I of the original variables that "explains" the leading
//! principal components: each variable outside I is replaced by a
//! nonparametric estimate of its conditional mean given the I-variables
//! (the blinded sample), and the subset is scored by how far the blinded
//! sample's leading eigenvectors drift from the original ones. Small
//! objective values mean the discarded variables contributed nothing the
//! retained ones could not reconstruct.
//!
//! The pieces:
//!
//! - [`pca`]: covariance and a deterministic symmetric eigensolver
//! - [`knn`]: nearest-neighbor conditional means and GCV bandwidth choice
//! - [`blinding`]: the blinded sample; exact Gaussian population analogue
//! - [`objective`]: per-component distances h^k, angles, and weighted h
//! - [`search`]: exhaustive / forward-backward / genetic subset search and
//!   the angle rule for choosing the cardinality
//! - [`baselines`]: Jolliffe's B2 and B4 rules for comparison
//! - [`simgen`]: the simulation models and the replication driver
//! - [`io`]: CSV ingestion and report serialization

pub mod baselines;
pub mod blinding;
pub mod error;
pub mod io;
pub mod knn;
mod linalg;
pub mod matrix;
pub mod objective;
pub mod pca;
pub mod search;
pub mod simgen;

pub use blinding::{blind, blind_population_gaussian, BlindedSample, GaussianModel, SubsetIndex};
pub use error::{Error, Result};
pub use knn::{
    default_r_grid, gcv_select_r, local_estimate, log_r_grid, neighbor_sets, Estimator, Metric,
    MetricKind, NeighborConfig, RSelect,
};
pub use matrix::{DataMatrix, SymMatrix};
pub use objective::{
    component_distance, evaluate, evaluate_population, make_weights, ComponentDistance,
    EvalConfig, ObjectiveReport, WeightScheme,
};
pub use pca::{covariance, eigendecompose, principal_components, EigenSystem};
pub use search::{
    DSelect, EmpiricalObjective, PopulationObjective, SearchConfig, SelectionResult, Strategy,
    SubsetObjective,
};
pub use simgen::{
    example2_true_cov, generate, run_study, Method, ModelKind, ModelSpec, ProportionTable,
    StudyConfig,
};
