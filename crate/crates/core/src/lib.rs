//! FABART: a factor-augmented vector autoregression whose measurement
//! equation is a sum of Bayesian regression trees.
//!
//! Module map:
//! - [`bart`]: trees, priors and the backfitting sampler.
//! - [`favar`]: state-space core, Gibbs sampler and forecasting.
//! - [`identify`]: external-instrument identification and generalized
//!   impulse responses.
//! - [`sim`]: synthetic factor DGPs and the Monte Carlo harness.
//! - [`eval`]: RMSE, kernel log scores and benchmarks.
//! - [`data`]: CSV ingestion, transformation codes and run configuration.
//! - [`cli`]: the `fabart` command-line front end.

pub mod bart;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod favar;
pub mod identify;
pub mod linalg;
pub mod sim;

pub use error::{Error, Result};
