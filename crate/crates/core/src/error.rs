use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points are coincident (separation {separation:.3e} m)")]
    CoincidentPoints { separation: f64 },

    /// Azimuth derivatives are undefined when the line of sight is vertical.
    #[error("line of sight is vertical; azimuth is undefined")]
    VerticalLineOfSight,

    #[error("invalid beam sector: {0}")]
    InvalidSector(String),

    #[error("subcarrier index {index} outside [{min}, {max}]")]
    IndexOutOfRange { index: i64, min: i64, max: i64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("receive combiner WᴴW is singular (condition number {condition:.3e})")]
    SingularCombiner { condition: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("clock-bias information {j_bu:.3e} is degenerate relative to trace {trace:.3e}")]
    DegenerateBias { j_bu: f64, trace: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown scenario '{0}' (expected A or B)")]
    UnknownScenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("nothing to emit: result set is empty")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Errors caused by bad user input rather than by the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation { .. }
                | Error::UnknownScenario(_)
                | Error::InvalidConfig(_)
                | Error::InvalidSector(_)
        )
    }
}
