use crate::data::{MatchId, PlayerId, TeamId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unknown team {0}")]
    UnknownTeam(TeamId),

    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),

    #[error("unknown match {0}")]
    UnknownMatch(MatchId),

    #[error("player {0} has no match history")]
    NoHistory(PlayerId),

    #[error("prediction error: {0}")]
    Prediction(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
