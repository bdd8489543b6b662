//! The model-backend abstraction: one generation contract with a
//! scripted deterministic implementation for tests, a record/replay
//! wrapper, and an HTTP provider client for real runs.

mod http;
mod recording;
mod scripted;

pub use http::{parse_chat_completion, HttpBackend, HttpBackendConfig};
pub use recording::{load_recording, RecordEntry, RecordingBackend, ReplayBackend};
pub use scripted::{ScriptedBackend, ScriptedBackendBuilder, ScriptedEntry};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::Purpose;

/// One generation request. `purpose` determines which ledger counter the
/// response increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub context: String,
    pub temperature: f64,
    pub agent_id: String,
    pub round: u32,
    pub purpose: Purpose,
}

impl GenerationRequest {
    pub fn new(context: impl Into<String>, agent_id: &str, round: u32, purpose: Purpose) -> Self {
        Self {
            context: context.into(),
            temperature: 0.0,
            agent_id: agent_id.to_string(),
            round,
            purpose,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

/// Model text plus token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Transient transport failure; the runtime retries these.
    #[error("transport error: {0}")]
    Transport(String),
    /// A scripted fixture has no entry for this request. Always a test
    /// authoring error, never retried.
    #[error("scripted fixture miss: agent={agent_id} round={round} purpose={purpose} ordinal={ordinal}")]
    FixtureMiss {
        agent_id: String,
        round: u32,
        purpose: Purpose,
        ordinal: u32,
    },
    /// A replayed request's context differs from the recording.
    #[error("replay divergence at agent={agent_id} round={round} purpose={purpose} ordinal={ordinal}: recorded context hash {expected}, live context hash {actual}")]
    Divergence {
        agent_id: String,
        round: u32,
        purpose: Purpose,
        ordinal: u32,
        expected: String,
        actual: String,
    },
    /// More requests arrived for a key than the recording holds.
    #[error("recording exhausted at agent={agent_id} round={round} purpose={purpose}: {recorded} responses recorded, request ordinal {ordinal}")]
    Exhausted {
        agent_id: String,
        round: u32,
        purpose: Purpose,
        ordinal: u32,
        recorded: u32,
    },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("backend io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BackendError {
    /// Only transport failures are safe to retry; everything else is
    /// deterministic and would fail identically.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A model backend. Implementations must tolerate concurrent `generate`
/// calls.
pub trait ModelBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(request)
    }
}
