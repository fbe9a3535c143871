//! Synthetic generation and evaluation of firefighter intervention records.
//!
//! The crate is organised around the life of a dataset:
//!
//! - [`data`]: record schema, CSV I/O, quantile encoding, zone assignment and a
//!   surrogate generator for desk-scale experiments.
//! - [`neural`]: a small dense network with exact backpropagation and Adam.
//! - [`diffusion`]: mixed Gaussian/multinomial diffusion, unconditional or
//!   conditioned on a categorical target column.
//! - [`baselines`]: resampling generators (shuffle with replacement, independent
//!   per-column marginals).
//! - [`metrics`]: Wasserstein, MMD, PRDC, Jensen-Shannon, variation and
//!   marginal statistics, gathered into a [`metrics::FidelityReport`].
//! - [`quota`]: per-area rejection sampling with a draw budget.
//! - [`dispatch`]: discrete-event replay of interventions against a fleet.
//! - [`report`]: comparison tables and figure data across generators.

pub mod baselines;
pub mod data;
pub mod diffusion;
pub mod dispatch;
mod error;
pub mod generator;
pub mod metrics;
pub mod neural;
pub mod quota;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use generator::{ExternalRecords, RecordGenerator};
