//! Sample selection for training with noisy labels.
//!
//! The toolkit injects controlled label noise into synthetic data, trains a
//! small softmax classifier while logging per-epoch predictions, selects the
//! earliest-learned samples as a confident subset, and removes mislabeled
//! easy examples from it with the Early Cutting criterion (high loss, high
//! confidence, low input-gradient norm at a later epoch).

pub mod analysis;
pub mod cli;
mod container;
pub mod dataset;
pub mod dynamics;
pub mod earlycut;
pub mod error;
pub mod nettrain;
pub mod seed;

pub use error::{Error, Result};
