//! Numerical laboratory for double descent in head-tuned linear prediction.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod format;
pub mod harness;
pub mod linalg;
pub mod population;
pub mod rng;

pub use error::{Error, Result};
