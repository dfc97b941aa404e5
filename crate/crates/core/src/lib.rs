//! Estimators of the average treatment effect on the treated: outcome regression,
//! inverse probability weighting, augmented IPW, calibrated regression and calibrated
//! likelihood estimators built on augmented propensity score models, plus simulation and
//! bootstrap harnesses.

pub mod dataio;
pub mod el_solver;
pub mod error;
pub mod estimators;
pub mod models;
pub mod numkernel;
pub mod simulation;

pub use dataio::Dataset;
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorOutput};
