use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operand shapes or subsystem dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An input violates a mathematical precondition (normalization, unitarity, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A tensor product would exceed the configured maximum dimension.
    #[error("capacity error: dimension {requested} exceeds the limit of {limit}")]
    Capacity { requested: usize, limit: usize },

    /// A subsystem, record, or declaration name could not be found (or collides).
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Bob's reduced operators differ too much for the exact cheat construction.
    #[error(
        "commitment states are not concealing (trace distance {distance:.3e} > {threshold:.1e}); \
         use optimal_cheat_unitary for the nonideal case"
    )]
    NotConcealing { distance: f64, threshold: f64 },

    /// Protocol script could not be parsed or resolved.
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Protocol execution failed at a given step.
    #[error("step {step}: {message}")]
    Execution { step: usize, message: String },

    /// The requested analysis does not support this script structure.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn lookup(msg: impl Into<String>) -> Self {
        Error::Lookup(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
