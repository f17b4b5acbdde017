//! Flow-based botnet detection with a recurrent variational autoencoder.
//!
//! Stages, in pipeline order: [`ingest`] parses connection logs,
//! [`features`] aggregates them per window and source host, [`rvae`] trains
//! and scores sequence models, [`detect`] fits score distributions and
//! classifies, [`eval`] computes metrics. [`synth`] generates test traffic.

pub mod codec;
pub mod detect;
mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod rvae;
pub mod synth;

pub use error::{Error, Result};
