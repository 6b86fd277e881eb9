use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),

    #[error("symbol {symbol} at position {position} is outside the alphabet of size {size}")]
    SymbolOutOfRange { symbol: u32, position: usize, size: usize },

    #[error("invalid probability table: {0}")]
    InvalidDistribution(String),

    #[error("chain is reducible: {0}")]
    Reducible(String),

    #[error("path length must be at least 1")]
    EmptyPath,

    #[error("order {order} is below the true order {true_order}")]
    OrderBelowTruth { order: usize, true_order: usize },

    #[error("order {order} requires more than {n} observations")]
    OrderTooLarge { order: usize, n: usize },

    #[error("depth cap {cap} is too small, need at least {required}")]
    DepthCapTooSmall { cap: usize, required: usize },

    #[error("depth cap {cap} must be below path length {n}")]
    DepthCapNotBelowLength { cap: usize, n: usize },

    #[error("context space {size}^{depth} does not fit in 64 bits")]
    ContextOverflow { size: usize, depth: usize },

    #[error("order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("path has zero probability under the reference model")]
    ImpossiblePath,

    #[error("sample size {n} is below the minimum {min} for this penalty")]
    SampleTooSmall { n: f64, min: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corrupt counts dump: {0}")]
    CorruptDump(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
