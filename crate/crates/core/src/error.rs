use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit reports. The `Display` strings start with a
/// stable kebab-case code so logs and tests can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid-image: {0}")]
    InvalidImage(String),
    #[error("kernel-exceeds-image: kernel side {kernel} > image {width}x{height}")]
    KernelExceedsImage {
        kernel: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid-derivative-order: m={m} n={n}")]
    InvalidDerivativeOrder { m: u32, n: u32 },
    #[error("invalid-smooth-size: {0}")]
    InvalidSmoothSize(u32),
    #[error("no-active-channels")]
    NoActiveChannels,
    #[error("empty-pool")]
    EmptyPool,
    #[error("empty-cell")]
    EmptyCell,
    #[error("map-too-small: {width}x{height}")]
    MapTooSmall { width: usize, height: usize },
    #[error("patch-out-of-bounds: patch ({x},{y},{w},{h})")]
    PatchOutOfBounds { x: usize, y: usize, w: usize, h: usize },
    #[error("degenerate-pair-set: {0}")]
    DegeneratePairSet(String),
    #[error("no-intra-pairs")]
    NoIntraPairs,
    #[error("dim-mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("quota-exceeds-pool: need {needed} negatives, pool has {available}")]
    QuotaExceedsPool { needed: usize, available: usize },
    #[error("numerical-failure: round {round}, block {block}: {detail}")]
    NumericalFailure {
        round: usize,
        block: usize,
        detail: String,
    },
    #[error("protocol-mismatch: {0}")]
    ProtocolMismatch(String),
    #[error("worker-timeout: block {block} after retry")]
    WorkerTimeout { block: usize },
    #[error("worker-abort: code {0}")]
    WorkerAbort(u16),
    #[error("degenerate-labels")]
    DegenerateLabels,
    #[error("misaligned-scores: {0}")]
    MisalignedScores(String),
    #[error("insufficient-subjects: {subjects} subjects for {folds} folds")]
    InsufficientSubjects { subjects: usize, folds: usize },
    #[error("bad-input-size: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    BadInputSize {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("invalid-argument: {0}")]
    InvalidArgument(String),
    #[error("format: {0}")]
    Format(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
