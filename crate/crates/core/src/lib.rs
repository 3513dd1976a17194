//! Streaming collaborative topic regression.
//!
//! This crate implements a per-event Bayesian recommender that couples
//! diagonal-Gaussian matrix-factorization posteriors with a Gibbs-sampled
//! topic model, plus the online baselines it is usually compared against
//! (passive-aggressive CF, SGD matrix factorization, online variational LDA,
//! and a loosely coupled topic-regression composition). Data ingestion, a
//! synthetic-data generator with high-precision verification oracles, metric
//! tracking, grid search, and checkpointing round out the pipeline.
//!
//! Entry points:
//! - [`engine::ObctrEngine`] — the jointly optimized streaming model.
//! - [`baselines`] — PA-I, SGD-PMF, online LDA, and the loose OCTR coupling.
//! - [`run::train_stream`] — single-pass training over a rating stream.
//! - [`eval`] — RMSE, per-word predictive log-likelihood, grid search.
//! - [`synth`] — generative sampler and verification oracles.

pub mod baselines;
pub mod checkpoint;
pub mod engine;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod run;
pub mod seeding;
pub mod synth;
pub mod topics;

pub use engine::ObctrEngine;
pub use model::{GaussianFactor, HyperParams, ModelError, RatingEvent};
pub use topics::{Document, TopicState};
