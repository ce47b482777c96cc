//! Command-line pipeline for dissimilarity-based prediction intervals:
//! dataset generation, tuning of `(γ, c)`, prediction, evaluation against a
//! quantile-regression band, and density fitting.

pub mod commands;
pub mod config;

pub use config::{DataSource, RunConfig};
