use std::path::PathBuf;

use crate::lie::GroupKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rotation angle {theta} is within the branch-cut guard of pi")]
    AngleAtBranchCut { theta: f64 },
    #[error("matrix is not a valid {kind:?} element: {reason}")]
    NotInGroup { kind: GroupKind, reason: String },
    #[error("group kind mismatch: {left:?} vs {right:?}")]
    KindMismatch { left: GroupKind, right: GroupKind },
    #[error("invalid algebra vector: {0}")]
    InvalidAlgebra(String),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("k = {k} exceeds point count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("target count {p} exceeds point count {n}")]
    TargetTooLarge { p: usize, n: usize },
    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("batch statistics need at least 2 samples per channel, got {0}")]
    DegenerateBatch(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint config does not match model: {0}")]
    ConfigMismatch(String),
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated file {}", .0.display())]
    TruncatedFile(PathBuf),
    #[error("missing file {} (manifest row {row})", path.display())]
    MissingFile { path: PathBuf, row: usize },
    #[error("unsupported image format in {}: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("unknown label {label:?} (manifest row {row})")]
    UnknownLabel { label: String, row: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short variant name, used for machine-readable error lines.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::AngleAtBranchCut { .. } => "AngleAtBranchCut",
            Error::NotInGroup { .. } => "NotInGroup",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::InvalidAlgebra(_) => "InvalidAlgebra",
            Error::NonPositiveScale(_) => "NonPositiveScale",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::TargetTooLarge { .. } => "TargetTooLarge",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DegenerateBatch(_) => "DegenerateBatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::CorruptCheckpoint(_) => "CorruptCheckpoint",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::BadMagic { .. } => "BadMagic",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::TruncatedFile(_) => "TruncatedFile",
            Error::MissingFile { .. } => "MissingFile",
            Error::UnsupportedFormat { .. } => "UnsupportedFormat",
            Error::UnknownLabel { .. } => "UnknownLabel",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::Io { .. } => "Io",
        }
    }
}
