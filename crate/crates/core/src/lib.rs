//! Personalized federated learning under metric differential privacy.
//!
//! Clients pick the best of `k` server hypotheses on their local data, train it
//! with mini-batch SGD, and release the updated parameter vector through a
//! Euclidean Laplace mechanism whose scale is tuned to the size of their own
//! update. The server clusters the sanitized vectors with k-means seeded at the
//! current hypotheses and averages each cluster into the next hypothesis. A
//! per-client ledger composes the leakage of every release.
//!
//! Module map:
//!
//! - [`mechanism`]: density, normalization constant, and exact sampler of the
//!   Euclidean Laplace distribution in `R^n`.
//! - [`accounting`]: the noise-multiplier heuristic and additive leakage ledger.
//! - [`models`]: linear and ReLU MLP predictors with analytic gradients and
//!   local SGD.
//! - [`clustering`]: Lloyd's k-means seeded at given centroids.
//! - [`federation`]: the round loop, client step, aggregation, early stopping.
//! - [`data`]: synthetic populations, hospital-style CSV ingestion, splits and
//!   fixtures.
//! - [`experiment`]: config files, sweeps, and artifact writers used by the
//!   `dpfl` binary.

pub mod accounting;
pub mod clustering;
pub mod data;
mod error;
pub mod experiment;
pub mod federation;
pub mod mechanism;
pub mod models;
pub mod rng;

pub use error::{Error, Result};
