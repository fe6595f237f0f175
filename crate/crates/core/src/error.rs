use alloc::string::String;
use core::fmt;

/// Errors surfaced by model construction, inference and training.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// An assignment is missing a node or a label is out of range.
    InvalidAssignment(String),
    /// Weight vector length disagrees with the template dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// Graph or template violates a structural invariant.
    InvalidGraph(String),
    /// Enumeration refused: state space exceeds the configured cap.
    StateSpaceTooLarge { states_log2: u32, cap_log2: u32 },
    /// A configuration value is out of its documented range.
    Config(String),
    /// Training aborted on a non-finite gradient; the message names the
    /// iteration.
    NonFiniteGradient(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidAssignment(m) => write!(f, "invalid assignment: {m}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidGraph(m) => write!(f, "invalid graph: {m}"),
            Error::StateSpaceTooLarge { states_log2, cap_log2 } => write!(
                f,
                "state space 2^{states_log2} exceeds enumeration cap 2^{cap_log2}"
            ),
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::NonFiniteGradient(m) => write!(f, "non-finite gradient: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
