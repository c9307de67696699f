//! Frequency estimation under heterogeneous local privacy mechanisms.

pub mod alphabet;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod ingest;
pub mod lp;
pub mod mechanisms;
pub mod metrics;
pub mod postprocess;
pub mod rng;

pub use error::{Error, Result};
