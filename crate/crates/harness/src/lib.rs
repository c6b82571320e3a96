//! Experiment harness for the `ringrc` simulator: configuration documents,
//! seeded scans (bandwidth, pattern length, noise sweep), replayable run
//! records and CSV tables.

pub mod config;
pub mod error;
pub mod export;
pub mod run;
pub mod scan;
pub mod seed;

pub use config::{ExperimentConfig, HardwareSettings, Preset, ReservoirSettings, TaskGrid};
pub use error::{HarnessError, Result};
pub use run::{execute, replay, run_cell, CellTask, Execution, Metrics, RunRecord, RunSpec, Seeds};
pub use scan::{
    bandwidth_scan, noise_floor, noise_sweep, pattern_length_scan, BandwidthScan, NoiseFloor,
    NoiseSweep, PatternScan,
};
pub use seed::derive_seed;
