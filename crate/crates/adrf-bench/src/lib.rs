//! Benchmark harness: experiment presets over the robust dose-response library,
//! deterministic seeding, CSV persistence and per-cell aggregation.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod rows;

pub use config::BenchConfig;
pub use error::{BenchError, Result};
pub use presets::{run_preset, Preset, PresetOutput, RunOptions};
