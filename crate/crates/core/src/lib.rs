//! Bayesian analysis and process-parameter optimization for factorial
//! machining experiments.
//!
//! The crate models two responses of a milling run (surface roughness and
//! power consumption) jointly with a bivariate seemingly-unrelated-regressions
//! model, estimated by Gibbs sampling. On top of the posterior it provides
//! highest-density-interval summaries, predictions, a Bayesian ANOVA of factor
//! relevance, and a hybrid genetic / quasi-Newton search for the operating
//! point closest to a pair of target responses.
//!
//! Module map:
//!
//! - [`data`]: runs, factor specifications, CSV ingestion, synthetic data.
//! - [`design`]: the 14-term regressor expansion and the stacked design.
//! - [`gibbs`]: the SUR Gibbs sampler and convergence diagnostics.
//! - [`analysis`]: HDIs, significance tables, predictions, plot data.
//! - [`anova`]: hierarchical variance-components ANOVA.
//! - [`optim`]: distance objective, genetic algorithm, box-constrained BFGS.
//! - [`cli`]: configuration and the command implementations behind `machopt`.

// `!(x > 0.0)` style checks are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod anova;
pub mod cli;
pub mod data;
pub mod design;
pub mod error;
pub mod gibbs;
pub mod optim;
pub mod stats;
pub mod svg;

pub use error::{Error, ErrorKind, Result};
