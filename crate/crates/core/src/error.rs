use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the rfae library.
#[derive(Debug, Error)]
pub enum RfaeError {
    #[error("i/o error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("non-numeric feature at row {row}, column {column}: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("row-count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("no OOB trees for training point {0}")]
    NoOobTrees(usize),
    #[error("training point {0} is never in-bag")]
    NeverInBag(usize),
    #[error("isolated point {0}: zero row sum")]
    IsolatedPoint(usize),
    #[error("point disconnected from prototypes")]
    DisconnectedFromPrototypes,
    #[error("need at least one prototype per class ({requested} prototypes for {classes} classes)")]
    TooFewPrototypes { requested: usize, classes: usize },
    #[error("near-singular spectrum: eigenvalue {0:e}")]
    NearSingularSpectrum(f64),
    #[error("non-finite loss at epoch {epoch}: recon={recon}, geo={geo}")]
    NonFiniteLoss { epoch: usize, recon: f64, geo: f64 },
    #[error("unsupported version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checksum failure: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("stage `{stage}` failed: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<RfaeError>,
    },
}

impl RfaeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RfaeError::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RfaeError::InvalidParameter(msg.into())
    }

    /// Wrap an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        RfaeError::Stage {
            stage,
            inner: Box::new(self),
        }
    }
}

pub type Result<T, E = RfaeError> = std::result::Result<T, E>;
