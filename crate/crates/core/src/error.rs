use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("empty knowledge base: no concepts survived pruning")]
    EmptyKnowledgeBase,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("solver did not converge after {iterations} Lanczos steps (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("unknown concepts: {}", .0.join(", "))]
    UnknownConcepts(Vec<String>),

    #[error("no concepts found in {0:?}")]
    NoConcepts(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model file: {0}")]
    Format(String),

    #[error("item pool: {0}")]
    Pool(String),

    #[error("norm table: {0}")]
    Norms(String),

    #[error("age {0} is outside the norm table coverage")]
    AgeOutOfRange(String),

    #[error("invalid composition: {0}")]
    Composition(String),

    #[error("item {0:?} is not the current item")]
    NotCurrent(String),

    #[error("invalid scores: {0}")]
    InvalidScores(String),

    #[error("transcript: {0}")]
    Transcript(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
