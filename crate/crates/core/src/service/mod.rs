//! Transport-independent service logic: the detection gate and the
//! playground session store. The HTTP layer lives in the server crate.

mod playground;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use playground::{
    GuessRequest, GuessResponse, PlaygroundItem, PlaygroundPool, SampleResponse, Score, SessionInfo, SessionSnapshot,
    SessionStore, Verdict,
};

use crate::corpus::Label;
use crate::neural::ClassifierModel;
use crate::words::word_count;

pub const MIN_WORDS: usize = 50;
pub const MAX_WORDS: usize = 500;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("the text is empty")]
    Empty,
    #[error("the text has {words} words; at least {MIN_WORDS} are required")]
    TooShort { words: usize },
    #[error("the text has {words} words; at most {MAX_WORDS} are allowed")]
    TooLong { words: usize },
    #[error("the model is still loading")]
    NotLoaded,
    #[error("no unseen items left for this session")]
    Exhausted,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("item {0:?} was not served to this session")]
    UnknownItem(String),
    #[error("item {0:?} has already been scored")]
    AlreadyScored(String),
    #[error("{0}")]
    BadRequest(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Empty => "empty",
            ServiceError::TooShort { .. } => "too_short",
            ServiceError::TooLong { .. } => "too_long",
            ServiceError::NotLoaded => "not_loaded",
            ServiceError::Exhausted => "exhausted",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownItem(_) => "unknown_item",
            ServiceError::AlreadyScored(_) => "already_scored",
            ServiceError::BadRequest(_) => "bad_request",
        }
    }

    pub fn body(&self) -> ErrorBody {
        let word_count = match self {
            ServiceError::TooShort { words } | ServiceError::TooLong { words } => Some(*words),
            _ => None,
        };
        ErrorBody { code: self.code().to_string(), message: self.to_string(), word_count }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub label: Label,
    pub probabilities: BTreeMap<Label, f64>,
    pub word_count: usize,
    /// The token sequence was cut to the encoder's maximum length.
    pub truncated: bool,
}

/// Word-count gate shared by the service, the CLI and the browser demo.
/// Both bounds are inclusive.
pub fn check_length(text: &str) -> Result<usize, ServiceError> {
    if text.trim().is_empty() {
        return Err(ServiceError::Empty);
    }
    let words = word_count(text);
    if words < MIN_WORDS {
        Err(ServiceError::TooShort { words })
    } else if words > MAX_WORDS {
        Err(ServiceError::TooLong { words })
    } else {
        Ok(words)
    }
}

pub fn detect(model: &ClassifierModel, text: &str) -> Result<DetectResponse, ServiceError> {
    let word_count = check_length(text)?;
    let encoded = model.encode(text);
    let probs = model.predict_proba(text);
    let best = probs.iter().enumerate().fold(0, |b, (i, &p)| if p > probs[b] { i } else { b });
    Ok(DetectResponse {
        label: Label::from_code(best).expect("four classes"),
        probabilities: Label::ALL.into_iter().zip(probs).collect(),
        word_count,
        truncated: encoded.truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub loaded: bool,
    pub pool_size: usize,
    pub version: String,
}

pub fn health(loaded: bool, pool_size: usize) -> Health {
    Health { loaded, pool_size, version: VERSION.to_string() }
}
