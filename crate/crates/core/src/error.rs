use std::fmt;
use std::path::PathBuf;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "normal equations are rank deficient (rank {rank} < {unknowns} unknowns); \
         use a ridge weight lambda > 0"
    )]
    RankDeficient { rank: usize, unknowns: usize },

    #[error("no face: every detector source is empty and no fallback detector is configured")]
    NoFace,

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A parse failure in one of the textual or binary file formats.
///
/// `line` is 1-based; binary formats report 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatError {
    pub origin: String,
    pub line: usize,
    pub kind: FormatErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormatErrorKind {
    MalformedHeader(String),
    CountMismatch { expected: usize, found: usize },
    NonNumeric(String),
    FieldCount { expected: usize, found: usize },
    InvalidValue(String),
    UnknownKey(String),
    UnexpectedEof,
    BadMagic,
    UnsupportedVersion(u32),
}

impl FormatError {
    pub fn new(origin: impl Into<String>, line: usize, kind: FormatErrorKind) -> Self {
        FormatError {
            origin: origin.into(),
            line,
            kind,
        }
    }
}

impl fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatErrorKind::MalformedHeader(s) => write!(f, "malformed header: {s}"),
            FormatErrorKind::CountMismatch { expected, found } => {
                write!(f, "point count mismatch: header declares {expected}, found {found}")
            }
            FormatErrorKind::NonNumeric(s) => write!(f, "non-numeric value {s:?}"),
            FormatErrorKind::FieldCount { expected, found } => {
                write!(f, "expected {expected} fields, found {found}")
            }
            FormatErrorKind::InvalidValue(s) => write!(f, "invalid value: {s}"),
            FormatErrorKind::UnknownKey(s) => write!(f, "unknown key {s:?}"),
            FormatErrorKind::UnexpectedEof => write!(f, "unexpected end of input"),
            FormatErrorKind::BadMagic => write!(f, "bad magic bytes"),
            FormatErrorKind::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
        }
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}", self.origin, self.line, self.kind)
        } else {
            write!(f, "{}: {}", self.origin, self.kind)
        }
    }
}

impl std::error::Error for FormatError {}
