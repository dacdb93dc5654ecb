//! Bayesian multivariate dynamic linear models with a compositional
//! control/experimental split, and counterfactual causal forecasting on top.

pub mod causal;
pub mod commands;
pub mod comp;
pub mod config;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod linalg;
pub mod matvar;
pub mod mvdlm;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
pub use rng::RngStream;
