//! Sparse structure in multivariate extremes.
//!
//! The crate covers the usual peaks-over-threshold workflow on the standard
//! Pareto scale:
//!
//! - [`ingest`]: rank standardization and radius/angle exceedances,
//! - [`coefficients`]: tail dependence coefficients `χ`, residual
//!   coefficients `η` and the empirical exponent measure,
//! - [`angular`]: spherical k-means of extremal angles,
//! - [`epca`]: principal components of the angular second-moment matrix,
//! - [`faces`]: detection of groups of concomitantly extreme variables,
//! - [`models`]: max-linear, recursive max-linear, logistic and
//!   Hüsler–Reiss models,
//! - [`graphical`]: extremal graphical models on trees and block graphs.

pub mod error;
pub mod ingest;
mod matrix_serde;
pub mod rng;
pub mod stats;
pub mod angular;
pub mod coefficients;
pub mod epca;
pub mod faces;
pub mod graphical;
pub mod models;

pub use error::{Error, Result};

/// Version of this crate, recorded in pipeline manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
