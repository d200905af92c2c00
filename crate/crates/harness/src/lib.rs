//! Experiment driver: trains and scores the beam predictor against its
//! baselines, reproduces the standard sweep tables (interpolation factor,
//! history length, timing offset, Ricean K), and renders companion SVG plots
//! from the same rows the CSV files carry.

pub mod eval;
pub mod experiments;
pub mod gradcheck;
pub mod svg;
pub mod table;

pub use eval::{evaluate, EvalReport, Method, QueryRecord};
pub use experiments::{run_experiment, ExperimentKind, ExperimentOutput, Scale};
