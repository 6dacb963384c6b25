use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-domain input.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A hypothesis of the construction does not hold for the given data.
    /// `reference` names the result whose hypothesis failed.
    #[error("precondition of {reference} violated: {detail}")]
    Precondition { reference: String, detail: String },
    /// An iterative or quadrature step did not reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn precondition(reference: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Precondition {
            reference: reference.into(),
            detail: detail.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Prefix the message with context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Invalid(m) => Error::Invalid(format!("{ctx}: {m}")),
            Error::Precondition { reference, detail } => Error::Precondition {
                reference,
                detail: format!("{ctx}: {detail}"),
            },
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Format(m) => Error::Format(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
