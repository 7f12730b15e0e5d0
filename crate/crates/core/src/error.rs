use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("name {input:?} is empty after normalization")]
    EmptyName { input: String },

    #[error("character {ch:?} in {input:?} has no vocabulary symbol")]
    UnmappableCharacter { ch: char, input: String },

    #[error("csv schema: {0}")]
    Schema(String),

    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("corpus has {len} records, need at least {min}")]
    CorpusTooSmall { len: usize, min: usize },

    #[error("row {row} of the encoded matrix is not one-hot")]
    MalformedMatrix { row: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("non-finite function value at coordinate {index}")]
    NonFiniteValue { index: usize },

    #[error("kernel width {kernel} exceeds sequence length {length}")]
    KernelTooWide { kernel: usize, length: usize },

    #[error("unknown model kind {0:?}")]
    UnknownKind(String),

    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),

    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("empty set")]
    EmptySet,

    #[error("line search failed to decrease the objective at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("conjugate gradient stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("k = {k} neighbors requested but only {available} training points")]
    TooFewNeighbors { k: usize, available: usize },

    #[error("empty input")]
    Empty,

    #[error("confusion matrix has no entries")]
    EmptyMatrix,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model file version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("dataset does not match the model: {0}")]
    SeedMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable variant name, used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyName { .. } => "EmptyName",
            Error::UnmappableCharacter { .. } => "UnmappableCharacter",
            Error::Schema(_) => "SchemaError",
            Error::Parse { .. } => "ParseError",
            Error::AtRow { source, .. } => source.kind(),
            Error::CorpusTooSmall { .. } => "CorpusTooSmall",
            Error::MalformedMatrix { .. } => "MalformedMatrix",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyBatch => "EmptyBatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteGradient => "NonFiniteGradient",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::KernelTooWide { .. } => "KernelTooWide",
            Error::UnknownKind(_) => "UnknownKind",
            Error::EmptyPartition(_) => "EmptyPartition",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::EmptySet => "EmptySet",
            Error::Diverged { .. } => "Diverged",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::TooFewNeighbors { .. } => "TooFewNeighbors",
            Error::Empty => "Empty",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::ModelFormat(_) => "ModelFormatError",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptFile(_) => "CorruptFile",
            Error::SeedMismatch(_) => "SeedMismatch",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
        }
    }

    pub(crate) fn at_row(self, row: usize) -> Error {
        Error::AtRow {
            row,
            source: Box::new(self),
        }
    }
}
