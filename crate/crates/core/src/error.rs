use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("{op}: dimension error, shapes {shapes:?}: {detail}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
        detail: String,
    },
    #[error("graph error: {0}")]
    Graph(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("config error for key `{key}`: {detail}")]
    Config { key: String, detail: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, shapes: &[&[usize]], detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
