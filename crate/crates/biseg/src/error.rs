//! Error type shared across the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the segmentation pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Matrix shapes do not conform for the requested operation.
    Dimension {
        op: &'static str,
        detail: String,
    },
    /// A numeric operation produced or received a NaN/Inf value.
    NonFinite {
        op: &'static str,
    },
    /// An API contract was violated (e.g. backward on a non-scalar).
    Contract {
        detail: String,
    },
    /// A class label is outside the configured range.
    Label {
        label: u32,
        num_classes: usize,
    },
    /// An index is out of range.
    Bounds {
        index: usize,
        len: usize,
    },
    /// Invalid input data (empty scene, mismatched point counts, ...).
    Input {
        detail: String,
    },
    /// Invalid or inconsistent configuration.
    Config {
        detail: String,
    },
    /// A file could not be parsed; carries location diagnostics.
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    /// Filesystem failure, with the path that triggered it.
    Io {
        path: String,
        detail: String,
    },
    /// Checkpoint or file format version mismatch.
    Version {
        expected: u32,
        got: u32,
    },
    /// Training or optimization hit a non-finite value and aborted.
    Numeric {
        detail: String,
    },
    /// A verification tolerance was breached.
    Tolerance {
        detail: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::NonFinite { op } => write!(f, "non-finite value in {op}"),
            Error::Contract { detail } => write!(f, "contract violation: {detail}"),
            Error::Label { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Error::Bounds { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::Input { detail } => write!(f, "invalid input: {detail}"),
            Error::Config { detail } => write!(f, "invalid config: {detail}"),
            Error::Parse { path, line, detail } => {
                write!(f, "parse error in {path}:{line}: {detail}")
            }
            Error::Io { path, detail } => write!(f, "io error on {path}: {detail}"),
            Error::Version { expected, got } => {
                write!(f, "format version mismatch: expected {expected}, got {got}")
            }
            Error::Numeric { detail } => write!(f, "numeric failure: {detail}"),
            Error::Tolerance { detail } => write!(f, "tolerance breach: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    pub fn io(path: impl Into<String>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            detail: err.to_string(),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric, 5 tolerance.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Version { .. }
            | Error::Dimension { .. }
            | Error::Contract { .. }
            | Error::Bounds { .. } => 2,
            Error::Input { .. } | Error::Parse { .. } | Error::Io { .. } | Error::Label { .. } => 3,
            Error::NonFinite { .. } | Error::Numeric { .. } => 4,
            Error::Tolerance { .. } => 5,
        }
    }
}
