//! Joint ptychography-tomography: forward model, ADMM reconstruction (with and
//! without total-variation regularization), a two-step baseline, synthetic
//! experiment generators and reconstruction metrics.

pub mod error;
pub mod forward;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod solver;
pub mod twostep;
pub mod verify;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use forward::{AngleSet, ForwardModel, MeasurementSet, Probe, ScanGeometry};
pub use grid::{Angle, ComplexImage, ComplexVolume, Field3, C64};
pub use solver::{ConvergenceRecord, Metric, SolverConfig};
