//! Experiment driver: synthetic data, checkpoints, training runs, ablation
//! sweeps and report aggregation.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod netpbm;
pub mod report;

pub use config::ExperimentConfig;
