//! Desk-scale workbench for sub-6GHz assisted mmWave beam prediction.
//!
//! The crate simulates a time-varying dual-band geometric channel for a moving
//! user, builds DFT beam codebooks with an exhaustive-sweep oracle, and trains
//! a grouped-LSTM beam predictor (plus EKF and no-prior baselines) on top of a
//! minimal from-scratch tensor engine. Everything is deterministic given a
//! master seed, so datasets, checkpoints, and experiment tables reproduce
//! byte-for-byte.

pub mod baselines;
pub mod beams;
pub mod channel;
pub mod config;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod predictor;
pub mod tensornet;

pub use config::{ArrayConfig, Config, ScenarioConfig, ScenarioKind};
pub use error::Error;
pub use exec::ExecMode;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
