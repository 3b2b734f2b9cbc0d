use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("neighbourhood graph is disconnected (component sizes {component_sizes:?})")]
    DisconnectedGraph { component_sizes: Vec<usize> },
    #[error("not enough neighbours: need {needed}, have {available}")]
    InsufficientNeighbors { needed: usize, available: usize },
    #[error("distance vector has zero variance")]
    ZeroVariance,
    #[error("at least two classes are required")]
    SingleClass,
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

use alloc::string::ToString;
