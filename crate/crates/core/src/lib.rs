//! Probabilistic interval prediction from dissimilarity-based empirical
//! densities.
//!
//! A stored dataset `D = {[y_i; x_i]}` defines, for every candidate point `z`,
//! a convex dissimilarity `J_γ(z, D)` ([`dissim`]). Exponentiating
//! `−c · J_γ([ȳ; x], D)` over a grid of candidate outputs `ȳ` gives a discrete
//! conditional distribution for the output given the regressor `x`
//! ([`epdf`]), from which quantile intervals follow. The two scalars `γ` and
//! `c` are tuned on a validation set ([`tune`]). Linear quantile regression
//! and least squares are provided as baselines ([`baseline`]), and [`data`]
//! generates the Lorenz benchmark series.

pub mod baseline;
pub mod data;
pub mod dissim;
pub mod epdf;
pub mod error;
pub mod tune;

pub use data::Pair;
pub use dissim::{
    closed_form_gamma0, inner_minimizer, solve_dissimilarity, DissimilarityResult, DissimilaritySolver,
    DualMethod, PointSet, SolverSettings,
};
pub use epdf::{
    build_output_grid, central_estimate, conditional_distribution, conditioned_median, empirical_pdf_on_grid,
    interval_estimate, joint_point_set, ConditionalDistribution, OutputGrid, PredictionInterval, RegularGrid,
};
pub use error::{Error, Result};
pub use tune::{
    evaluate, log_likelihood, tune_c, tune_gamma, EvaluationMetrics, TuneOptions, TuningReport, ValidationSet,
};
