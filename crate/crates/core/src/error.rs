use thiserror::Error;

/// Errors shared across dataset parsing, model assembly, training and
/// model-file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated input: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },

    #[error("label {0} out of range (must be < 10)")]
    BadLabel(u8),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid model spec: {0}")]
    SpecInvalid(String),

    #[error("unsupported spec for the fixed-point datapath: {0}")]
    UnsupportedSpec(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("model file format version {0} not supported")]
    FormatVersionMismatch(u32),

    #[error("model file checksum mismatch (corrupt or truncated file)")]
    ChecksumMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
