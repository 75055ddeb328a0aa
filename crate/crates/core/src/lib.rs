//! Statistical verification of bounded temporal-logic properties of parametric
//! ODE systems with respect to the Bayesian posterior distribution of their
//! parameters.
//!
//! The pipeline has four stages, each with its own module:
//!
//! - [`model`] — parametric ODE systems with observation maps and external
//!   input signals, integrated on a discrete time grid.
//! - [`bltl`] — bounded linear temporal logic: a parser, a pretty-printer and
//!   an evaluator over trajectories.
//! - [`posterior`] — uniform box priors, Gaussian observation likelihoods and
//!   a Metropolis-Hastings chain over parameter space, with
//!   multiplicity-compressed sample stores.
//! - [`diagnostics`] — spectral-gap estimation from recorded parameter series
//!   via an iterative autocorrelation procedure.
//! - [`smc`] — fixed-sample-size and sequential hypothesis tests over the
//!   chain samples, with sample-size bounds tailored to dependent samples,
//!   plus decoupled (store-replay) and batch-parallel verification.
//!
//! [`config`] holds the on-disk formats: model configuration files,
//! observation CSVs and property files.

pub mod bltl;
pub mod config;
pub mod diagnostics;
pub mod model;
pub mod posterior;
pub mod smc;
