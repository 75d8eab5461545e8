use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("invalid action {0}")]
    InvalidAction(String),
    #[error("cannot sample {requested} transitions from a buffer holding {available}")]
    Underfilled { requested: usize, available: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("decision mode {mode} needs an actor with {expected} outputs, found {actual}")]
    ModeMismatch {
        mode: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
