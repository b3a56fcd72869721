use thiserror::Error;

/// Every failure a protocol run, loader or transformation can report.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("peer endpoint has terminated")]
    ChannelClosed,
    #[error("receive on an empty inbox (unmatched send/recv pair)")]
    NothingToReceive,
    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("modulus mismatch")]
    ModulusMismatch,
    #[error("modulus is not a power of two")]
    NonPowerOfTwoModulus,

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("gate {gate} reads wire {wire} before it is defined")]
    Topology { gate: usize, wire: usize },

    #[error("boolean triples exhausted")]
    TriplesExhausted,
    #[error("precomputed OTs exhausted ({0})")]
    OtExhausted(String),
    #[error("correlation pool exhausted ({0})")]
    CorrelationExhausted(String),
    #[error("invalid multiplication triple")]
    BmtInvalid,
    #[error("statistical mask does not fit in the plaintext space")]
    MaskOverflow,

    #[error("index {index} out of range for domain size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("index needs {needed} bits but only {width} are available")]
    IndexWidthOverflow { needed: usize, width: usize },

    #[error("plaintext out of range")]
    PlaintextOutOfRange,
    #[error("ciphertexts or keys belong to different public keys")]
    KeyMismatch,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("cluster height {0} is not supported (use 1, 2 or 3)")]
    UnsupportedQ(usize),
    #[error("session layout does not match the requested evaluation mode")]
    LayoutMismatch,
    #[error("layered evaluation needs a complete tree")]
    TreeNotComplete,

    #[error("correlation file: {0}")]
    CorrelationFile(String),
    #[error("unknown PRF instance {0:?}")]
    UnknownInstance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
