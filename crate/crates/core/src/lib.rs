//! Simultaneous quantile regression with an LSTM embedding and a
//! monotonically constrained deep lattice head.
//!
//! The model maps a past window of features and a quantile level `tau` to an
//! `h`-step forecast of that quantile. One embedding pass serves every
//! requested `tau`, and the lattice head guarantees the forecasts never
//! cross as `tau` increases.

pub mod cli;
pub mod data;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod heads;
pub mod metrics;
pub mod monotonic;
pub mod numerics;

pub use error::{Error, Result};
