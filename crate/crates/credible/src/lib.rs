//! Adaptive Bayesian credible balls for the infinite Gaussian sequence model
//! `X_i = theta_{0,i} + Z_i / sqrt(n)`.
//!
//! Three data-driven constructions are provided:
//! - marginal-likelihood empirical Bayes balls ([`credible_sets::eb_credible_ball`]),
//! - hierarchical Bayes balls sampled by Metropolis-within-Gibbs
//!   ([`hierarchical::run_mcmc`], [`credible_sets::hier_credible_ball`]),
//! - risk-based empirical Bayes balls ([`credible_sets::risk_credible_ball`]),
//!
//! together with the deterministic theory-check oracles in [`bounds`] and the
//! Monte-Carlo coverage/figure harness in [`experiments`].

pub mod bounds;
pub mod conjugate;
pub mod credible_sets;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod hierarchical;
pub mod radius;
pub mod sequence_model;
pub mod stream;

pub use error::{Error, Result};
