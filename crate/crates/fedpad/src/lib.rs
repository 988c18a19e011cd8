//! Federated presentation-attack-detection simulator.
//!
//! Round-based federated averaging over synthetic multi-domain real/spoof
//! data, with an optional domain-disentanglement training path that
//! aggregates only the domain-invariant half of each local model.

pub mod autodiff;
pub mod config;
pub mod datagen;
pub mod error;
pub mod federation;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod params;
pub mod tensor;
pub mod wire;

pub use error::{Error, Result};
