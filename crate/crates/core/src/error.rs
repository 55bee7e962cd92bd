use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("structural mismatch: {0}")]
    Structure(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
