use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: &'static str, found: usize },

    #[error("field {index} ({name}): cannot parse {value:?} as a number")]
    ParseField {
        index: usize,
        name: &'static str,
        value: String,
    },

    #[error("point cloud byte length {0} is not a multiple of 16")]
    Alignment(usize),

    #[error("point {0} has a NaN coordinate")]
    NanCoordinate(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("layer {layer}: dimension mismatch, expected {expected}, found {found}")]
    LayerDimensionMismatch {
        layer: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown role {0:?} (expected gt, tp, fp or det)")]
    UnknownRole(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("{0} must be strictly positive")]
    NonPositive(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no classes shared between source and target statistics")]
    NoSharedClasses,

    #[error("no eligible frames after filtering")]
    NoEligibleFrames,

    #[error(
        "source beams {source_beams} not divisible by target beams {target_beams}; \
         nearest supported target is {suggestion}"
    )]
    NonDivisibleRatio {
        source_beams: u32,
        target_beams: u32,
        suggestion: u32,
    },

    #[error("detection {0} has no score")]
    MissingScore(usize),

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("{path}:{line}: {source}")]
    AtLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn at_line(self, path: impl Into<PathBuf>, line: usize) -> Self {
        Error::AtLine {
            path: path.into(),
            line,
            source: Box::new(self),
        }
    }
}
