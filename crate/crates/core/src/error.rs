use thiserror::Error;

/// Errors raised by the geometric and numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point is in the cut locus (inner product {inner:.3e})")]
    CutLocus { inner: f64 },

    #[error("all kernel weights vanished; query point is outside the data support")]
    EmptyNeighborhood,

    /// The eigen-gap between the k'th and (k+1)'th eigenvalue vanished.
    #[error("singular point (eigen-gap {gap:.3e}{})", fmt_step(.step))]
    SingularPoint { gap: f64, step: Option<usize> },

    #[error("trajectory diverged at step {step} (distance {distance:.3e} from the data support)")]
    Diverged { step: usize, distance: f64 },

    #[error("no restart achieved descent")]
    NoDescent,

    #[error("no submanifold within threshold of the query point")]
    NoSubmanifoldInRange,

    #[error("point outside the chart domain: {0}")]
    ChartDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_step(step: &Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Attach a step index to a singular-point error raised mid-trajectory.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::SingularPoint { gap, step: None } => Error::SingularPoint {
                gap,
                step: Some(step),
            },
            other => other,
        }
    }

    /// True for failures caused by the numerics (singularities, divergence, ...)
    /// rather than by bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CutLocus { .. }
                | Error::EmptyNeighborhood
                | Error::SingularPoint { .. }
                | Error::Diverged { .. }
                | Error::NoDescent
                | Error::NoSubmanifoldInRange
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
