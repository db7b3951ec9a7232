use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("invalid label at line {line}")]
    InvalidLabel { line: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    /// A record-level error together with the file it came from.
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("fold_count {folds} exceeds smallest class count {min_class}")]
    TooManyFolds { folds: usize, min_class: usize },

    #[error("no features survive thresholds")]
    EmptyVocabulary,

    #[error("support mismatch between compared distributions")]
    SupportMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("ground matrix is {rows}x{cols}, expected {expected}x{expected}")]
    GroundMatrixShape {
        rows: usize,
        cols: usize,
        expected: usize,
    },

    #[error("corpus {0} must contain both classes")]
    SingleClass(String),

    #[error("{0} requires labels")]
    MissingLabels(String),

    #[error("insufficient candidates for LOO fit: need at least 3, got {0}")]
    InsufficientCandidates(usize),

    #[error("selection size {n} out of range 1..={max}")]
    SelectionSize { n: usize, max: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("degenerate t-test: {0}")]
    DegenerateTTest(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no runs")]
    NoRuns,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the file name unless the error already carries a path.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::Json { .. } | Error::InFile { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
