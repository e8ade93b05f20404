//! Regression models for the emission-reduction rate and their explanations.

pub mod cv;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod gbm;
pub mod metrics;
pub mod ols;

pub use dataset::Dataset;
pub use error::{ModelError, Result};
pub use gbm::{BoostedModel, Growth, Hyperparams};
