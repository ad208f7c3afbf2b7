//! Supervised integrative biclustering of multi-view exponential-family data.
//!
//! Several data views measured on the same samples are factorized jointly as
//! `Psi_d = 1 mu_d^T + (U o W) V_d^T`, with an outcome `y` whose natural
//! parameter `[W | X_E] beta` steers the soft sample assignments `W`. Sparse
//! loadings `V_d` pick the variables of each bicluster.

pub mod error;
pub mod expfam;
pub mod fit;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod predict;
pub mod projections;
pub mod selection;
pub mod simgen;

pub use error::{Result, SibError};
pub use expfam::Family;
pub use fit::{fit, fit_from, initialize, refit_beta, FitConfig, StepRule};
pub use loss::LossWeights;
pub use model::{BiclusterResult, ModelParams, OutcomeSpec, StopReason, ViewMatrix};
pub use predict::{predict, PredictConfig, PredictionResult};
pub use selection::{random_search, select_k, SearchSpace};
pub use simgen::{generate, SimConfig};
