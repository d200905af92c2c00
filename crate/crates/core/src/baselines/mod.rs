//! Comparison methods: an EKF angle tracker driven by periodic low-band beam
//! measurements, and a deep no-history predictor that maps one instantaneous
//! low-band CSI snapshot to a mmWave beam.

pub mod ekf;
pub mod noprior;

pub use ekf::{ekf_predict, ekf_update, ekf_track_episode, EkfQueryPrediction, EkfState, EkfTracker};
pub use noprior::{train_no_prior, NoPriorModel};
