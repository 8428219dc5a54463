//! Prediction-augmented estimation of means and regression coefficients.
//!
//! A small labeled sample is combined with a large unlabeled sample
//! carrying model predictions. The estimators here correct the prediction
//! mean with labeled residuals, either globally, inside the leaves of a
//! residual tree, or by numerical quadrature over the covariate.

pub mod baseline;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod paq;
pub mod part_mean;
pub mod part_regression;
pub mod report;
pub mod rng;
pub mod stats;
pub mod tree;

pub use data::{Dataset, LabeledSample, Schema, UnlabeledSample};
pub use error::{Error, ErrorKind, Result};
pub use report::EstimateReport;
pub use rng::RandomSource;
pub use tree::{Tree, TreeConfig};
