//! Conditional probability density prediction for tabular data with
//! Hierarchical Correlation Reconstruction (HCR).
//!
//! Every variable is normalized to a nearly uniform distribution on [0,1].
//! The conditional density of the target is then modeled as
//! `1 + sum_i f_i(y) a_i(x)` over orthonormal shifted Legendre polynomials
//! `f_i`, with the moment-like coefficients `a_i(x)` predicted by sparse
//! linear regressions of encoded context features in a CCA-optimized basis.
//!
//! # Modules
//!
//! - [`ingest`] - CSV loading, column-kind inference, merging
//! - [`normalize`] - empirical-distribution rank maps
//! - [`basis`] - orthonormal polynomial basis
//! - [`features`] - feature encoding and standardization
//! - [`cca`] - canonical correlation analysis
//! - [`regress`] - l1-regularized least squares
//! - [`density`] - model fitting, calibration, prediction
//! - [`evaluate`] - cross-validation, relevance, novelty, plot tables
//! - [`cli`] - command-line surface

pub mod basis;
pub mod cca;
pub mod cli;
pub mod density;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod normalize;
pub mod regress;

pub use density::{CalibrationConfig, CalibrationKind, DensityConfig, DensityModel, PredictedDensity};
pub use error::{Error, Result};
pub use evaluate::{cross_validate, CvConfig, CvReport};
pub use ingest::{load_csv, Dataset, Value};
