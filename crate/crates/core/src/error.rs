use alloc::boxed::Box;
use core::fmt;

/// Errors from the pure codec and math layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// Malformed bytes where a specific structure was expected.
    Format(&'static str),
    /// Structurally valid input using a feature this implementation rejects.
    Unsupported(&'static str),
    /// Input ended before the structure was complete.
    Truncated,
    /// A record frame failed one of its CRC checks.
    CorruptFrame,
    /// Sample payload bytes decode to an inconsistent sample.
    Payload(&'static str),
    InvalidArgument(&'static str),
    /// Operand dimensions disagree.
    DimMismatch { expected: usize, got: usize },
    /// Newton solve hit a singular (or indefinite) Hessian.
    SingularHessian,
    EmptyInput,
    EmptyDataset,
    /// An augmentation chain failed at op `index`.
    ChainOp { index: usize, source: Box<CoreError> },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Format(what) => write!(f, "bad format: {what}"),
            CoreError::Unsupported(what) => write!(f, "unsupported: {what}"),
            CoreError::Truncated => write!(f, "input is truncated"),
            CoreError::CorruptFrame => write!(f, "record frame failed CRC check"),
            CoreError::Payload(what) => write!(f, "bad sample payload: {what}"),
            CoreError::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            CoreError::DimMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            CoreError::SingularHessian => write!(f, "Hessian is singular"),
            CoreError::EmptyInput => write!(f, "input is empty"),
            CoreError::EmptyDataset => write!(f, "dataset is empty"),
            CoreError::ChainOp { index, source } => {
                write!(f, "augmentation op {index} failed: {source}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
