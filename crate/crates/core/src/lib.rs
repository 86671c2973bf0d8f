pub mod deterministic;
pub mod discretization;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod report;
pub mod stats;
pub mod stochastic;
pub mod yosida;

pub use error::{Error, Result};
