//! Benchmark harness: dataset resolution, sweeps, measurement, and records.

pub mod config;
pub mod datasets;
pub mod measure;
pub mod records;
pub mod sweeps;

pub use records::{BenchRecord, EmitFormat};
pub use sweeps::SweepContext;
