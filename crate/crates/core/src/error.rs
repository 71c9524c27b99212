use thiserror::Error;

/// Errors surfaced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("no events recorded for setting pair (x={x}, y={y})")]
    EmptySetting { x: u8, y: u8 },

    #[error("preparation never occurred ({side} side: setting {setting}, outcome {outcome}); witness undefined")]
    ZeroPreparation {
        side: &'static str,
        setting: u8,
        outcome: u8,
    },

    #[error("{0}")]
    Domain(String),

    #[error("seed source exhausted: need {needed} bits, got {got}")]
    SeedTooShort { needed: usize, got: usize },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
