//! Synthetic agent population generation from tabular micro-samples.
//!
//! Three generators are provided and compared against two reference baselines:
//!
//! * [`vae`]: a variational autoencoder with mixed numeric/categorical output heads,
//!   trained with RMSprop on top of the small dense-network substrate in [`neural`].
//! * [`gibbs`]: a Gibbs sampler whose full conditionals are frequency tables.
//! * [`bayesnet`]: Bayesian networks learned with Chow-Liu, greedy MDL hill climbing,
//!   or exact dynamic-programming search, sampled ancestrally.
//! * [`baselines`]: independent-marginal sampling and resampling of the training set.
//!
//! [`metrics`] holds the evaluation machinery (SRMSE / Corr / R² over marginal,
//! bivariate, trivariate and projected views, pairwise Cramér's V, nearest-sample
//! diversity and PCA), and [`pipeline`] wires everything together.
//!
//! Data-parallel loops go through [`par`]; with the `parallel` feature disabled every
//! loop runs sequentially and produces bit-identical results.

pub mod baselines;
pub mod bayesnet;
pub mod dataset;
pub mod error;
pub mod gibbs;
pub mod metrics;
pub mod neural;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod vae;

pub use error::{Error, Result};
