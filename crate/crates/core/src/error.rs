use thiserror::Error;

/// Problems found while reading or validating a trace file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: unknown operation kind `{kind}`")]
    UnknownKind {
        line: usize,
        column: usize,
        kind: String,
    },
    #[error("line {line}: processes may not write the bottom value `_`")]
    BottomWrite { line: usize },
    #[error("line {line}: value {value} is written to `{var}` twice (first on line {first_line})")]
    DuplicateWrite {
        var: String,
        value: i64,
        first_line: usize,
        line: usize,
    },
    #[error("line {line}: read of `{var}` returns {value}, which no operation writes")]
    DanglingRead {
        var: String,
        value: String,
        line: usize,
    },
}

/// Errors raised by checkers and generators.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("property GAO needs a serial order assignment")]
    MissingSerialOrder,
    #[error(
        "{model} expects {expected} synchronization operations, found `{found}` on line {line}"
    )]
    SyncKindMismatch {
        model: String,
        expected: &'static str,
        found: String,
        line: usize,
    },
    #[error("variable `{var}` is associated with both `{first}` and `{second}`")]
    ConflictingAssociation {
        var: String,
        first: String,
        second: String,
    },
    #[error("brute-force oracle refuses subsets larger than {limit} operations (got {size})")]
    OracleTooLarge { size: usize, limit: usize },
    #[error("no read can be reassigned to a different written value")]
    NoMutationCandidate,
    #[error("search budget exhausted: {0}")]
    Budget(String),
}
