//! Configuration, data ingestion, drivers and artifact writers for the
//! flowgen experiments.

pub mod artifacts;
pub mod config;
pub mod drivers;
pub mod pgm;

pub use config::ExperimentConfig;
