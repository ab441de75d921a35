//! Empirical-likelihood model checks for regression.
//!
//! A null model family is fitted ([`model_null`]), a marked empirical
//! process is assembled from its residuals ([`marked_process`]), and each
//! column of marks is turned into a log empirical-likelihood ratio
//! ([`el_core`]). The sup and integral of that curve ([`testkit`]) are
//! calibrated with a multiplier bootstrap on the estimated influence scores
//! ([`bootstrap`]). The [`sim`] module replays the classical power studies
//! for the parametric and binomial-logistic families.

pub mod bootstrap;
pub mod dataset;
pub mod el_core;
pub mod error;
pub mod marked_process;
pub mod model_null;
pub mod rng;
pub mod sim;
pub mod testkit;

pub use dataset::{ColumnSplit, Dataset};
pub use el_core::{el_log_ratio, solve_lambda, ElEvaluation, ExtReal, MarkVector};
pub use error::{Error, Result};
