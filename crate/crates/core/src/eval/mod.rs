//! Metrics, synthetic scenarios, experiment grids and result emission.

pub mod emit;
pub mod experiment;
pub mod metrics;
pub mod scenario;
pub mod synth;
