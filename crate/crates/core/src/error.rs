use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("zero-dimension image")]
    EmptyImage,
    #[error("invalid image buffer: expected {expected} bytes, got {actual}")]
    BufferSize { expected: usize, actual: usize },
    #[error("crop {out_w}x{out_h} exceeds image {width}x{height}")]
    CropTooLarge {
        out_w: usize,
        out_h: usize,
        width: usize,
        height: usize,
    },
    #[error("coordinate ({x}, {y}) has no central neighbour in a {width}x{height} image")]
    BorderPixel {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("no patches for {0}")]
    NoPatches(String),
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("duplicate patch name {0}")]
    DuplicatePatch(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image encoding error: {0}")]
    Encode(String),
}

/// Coarse grouping of [`Error`] variants, used for exit codes and the C ABI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// The input image could not be decoded or is degenerate.
    Input,
    /// Parameters or geometry are inconsistent.
    InvalidArgument,
    /// A model file is unusable or training failed.
    Model,
    /// Dataset, patch store or evaluation bookkeeping problems.
    Data,
    Io,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Input => "input",
            ErrorCategory::InvalidArgument => "invalid-argument",
            ErrorCategory::Model => "model",
            ErrorCategory::Data => "data",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Unreadable { .. } | UnsupportedFormat(_) | EmptyImage | BufferSize { .. } => {
                ErrorCategory::Input
            }
            CropTooLarge { .. }
            | BorderPixel { .. }
            | OutOfBounds(_)
            | InvalidParams(_)
            | ShapeMismatch(_)
            | Config(_) => ErrorCategory::InvalidArgument,
            Diverged { .. } | CorruptModel(_) | VersionMismatch { .. } => ErrorCategory::Model,
            NoPatches(_) | Undefined(_) | LengthMismatch(..) | DuplicatePatch(_) | Dataset(_)
            | MissingArtifact(_) => ErrorCategory::Data,
            Io(_) | Csv(_) | Json(_) | Encode(_) => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
