use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain extent must be positive on axis {axis}: lo = {lo}, hi = {hi}")]
    NonPositiveExtent { axis: usize, lo: f64, hi: f64 },

    #[error("unsupported spatial dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("ellipticity violated at t = {t}, node {node}: smallest eigenvalue {min_eigenvalue} < floor {floor}")]
    EllipticityViolation {
        t: f64,
        node: usize,
        min_eigenvalue: f64,
        floor: f64,
    },

    #[error("diffusion matrix not symmetric at t = {t}, node {node}")]
    AsymmetricDiffusion { t: f64, node: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("leading reaction coefficient {value} at t = {t} does not stay below -{floor}")]
    LeadingCoefficientViolation { t: f64, value: f64, floor: f64 },

    #[error("invalid reaction polynomial: {0}")]
    InvalidReaction(String),

    #[error("supplied dissipativity shift {supplied} is below the computed value {computed}")]
    ZetaTooSmall { supplied: f64, computed: f64 },

    #[error("Yosida index k = {k} must exceed the dissipativity shift {zeta}")]
    IndexBelowShift { k: f64, zeta: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("resolvent (nI - A) is singular for n = {0}; is the operator dissipative?")]
    SingularResolvent(f64),

    #[error("singular linear system in time step at t = {0}")]
    SingularStep(f64),

    #[error("final time {t} precedes initial time {s}")]
    NegativeInterval { s: f64, t: f64 },

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("kernel has no entries above the detection threshold")]
    DegenerateKernel,

    #[error("field contains non-finite values")]
    InvalidField,

    #[error("trajectories or forcing do not share a time grid")]
    GridMismatch,

    #[error("solution modes disagree: sup distance {distance:e} exceeds {limit:e}")]
    ModeDisagreement { distance: f64, limit: f64 },

    #[error("factorization exponent alpha = {0} outside (0, 1/2)")]
    AlphaOutOfRange(f64),

    #[error("noise regularity precondition failed: {0}")]
    RegularityPreconditionFailed(String),

    #[error("approximating sequence is not Cauchy: {0}")]
    SequenceNotCauchy(String),

    #[error("invalid configuration at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
