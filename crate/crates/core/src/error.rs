use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("malformed network file: {0}")]
    MalformedNetwork(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("inconsistent problem definition: {0}")]
    InvalidProblem(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{count} unstable neurons exceed the cap of {cap}")]
    TooManyUnstable { count: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
