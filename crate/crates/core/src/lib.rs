//! Simulator for a delay-based ring reservoir computer whose output is fed
//! back as its input, so that it can generate time series on its own.
//!
//! * [`reservoir`]: the sine ring, linear readout, teacher-forced drive and
//!   closed-loop generation.
//! * [`trainer`]: state harvesting, ridge regression, NMSE.
//! * [`tasks`]: sine and random-pattern generation tasks with their
//!   success criteria.
//! * [`hardware`]: noise, converter resolution, fixed-point weights, state
//!   gain and the amplifier high-pass.

pub mod error;
pub mod hardware;
pub mod reservoir;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
pub use hardware::{HardwareChannel, HardwareModel};
pub use reservoir::{
    autonomous_run, drive, make_mask, readout, step, AutonomousOptions, AutonomousRun,
    ReadoutWeights, ReservoirConfig, ReservoirState, StateTrajectory,
};
pub use tasks::{FrequencyTask, PatternEvaluation, PatternTask, TaskOutcome};
pub use trainer::{harvest, nmse, ridge_solve, train, RidgeSolution, TrainingSet};
