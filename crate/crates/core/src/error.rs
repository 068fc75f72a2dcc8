use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular potential: position coincides with the unsoftened source")]
    SingularPotential,

    #[error("trajectory approached the source within {distance:e} at t = {t}")]
    SingularityApproach { t: f64, distance: f64 },

    #[error("zero hopping on axis {axis}: effective mass is undefined")]
    ZeroHopping { axis: usize },

    #[error("no root found for anisotropy {xi} in the bracket (0, {upper}]")]
    NoRoot { xi: f64, upper: f64 },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("relative energy drift {drift:e} exceeds tolerance {tolerance:e}")]
    EnergyDrift { drift: f64, tolerance: f64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("non-finite coefficient after step {step}")]
    NonFinite { step: usize },

    #[error("boundary mass {mass:e} exceeds threshold {threshold:e} at t = {t}")]
    BoundaryContamination { t: f64, mass: f64, threshold: f64 },

    #[error("degenerate fit: sum of S^2 is zero")]
    DegenerateFit,

    #[error("grid of {sites} sites exceeds the ceiling of {ceiling}")]
    GridGrowth { sites: usize, ceiling: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("{0}")]
    Range(String),

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures raised by a numerical guard during a run, as opposed
    /// to rejected input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularPotential
            | Error::SingularityApproach { .. }
            | Error::EnergyDrift { .. }
            | Error::NonFinite { .. }
            | Error::BoundaryContamination { .. }
            | Error::DegenerateFit
            | Error::NoRoot { .. }
            | Error::GridGrowth { .. } => true,
            Error::Scenario { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_scenario(self, name: &str) -> Error {
        match self {
            e @ Error::Scenario { .. } => e,
            e => Error::Scenario {
                scenario: name.to_string(),
                source: Box::new(e),
            },
        }
    }
}
