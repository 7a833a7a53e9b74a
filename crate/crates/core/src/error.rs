use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config error at `{path}`: {message}")]
    ConfigField { path: String, message: String },

    #[error("unsupported modulation: {bits} bits per symbol (expected 2, 4 or 6)")]
    Modulation { bits: u32 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("root {root} is not coprime with sequence length {len}")]
    ZcRoot { root: u32, len: u32 },

    #[error("sample count {len} is not a multiple of the symbol length {symbol_len}")]
    SampleCount { len: usize, symbol_len: usize },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("capacity exceeded: {count} UEs requested, limit is {limit}")]
    Capacity { count: usize, limit: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("timestamps must be strictly increasing (got {prev} then {next})")]
    NonMonotonic { prev: f64, next: f64 },

    #[error("malformed record: {0}")]
    Wire(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
