//! Deterministic fixture-driven backend for tests.
//!
//! Responses are keyed on (agent_id, round, purpose, call ordinal); the
//! ordinal is the per-key call counter, so an agent that generates
//! twice in one round consumes ordinals 0 and 1. Lookups that miss fail
//! loudly instead of inventing text.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRequest, GenerationResponse, ModelBackend};
use crate::core::Purpose;

/// One scripted response in a fixture document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEntry {
    pub agent_id: String,
    pub round: u32,
    pub purpose: Purpose,
    #[serde(default)]
    pub ordinal: u32,
    pub text: String,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptDocument {
    version: u32,
    responses: Vec<ScriptedEntry>,
}

type Key = (String, u32, Purpose);

pub struct ScriptedBackend {
    responses: HashMap<(String, u32, Purpose, u32), GenerationResponse>,
    ordinals: Mutex<HashMap<Key, u32>>,
    requests: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptedEntry>) -> Self {
        let responses = entries
            .into_iter()
            .map(|e| {
                (
                    (e.agent_id, e.round, e.purpose, e.ordinal),
                    GenerationResponse { text: e.text, tokens_in: e.tokens_in, tokens_out: e.tokens_out },
                )
            })
            .collect();
        Self {
            responses,
            ordinals: Mutex::new(HashMap::new()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn builder() -> ScriptedBackendBuilder {
        ScriptedBackendBuilder::default()
    }

    pub fn from_fixture(text: &str) -> Result<Self, BackendError> {
        let doc: ScriptDocument = serde_json::from_str(text)?;
        if doc.version != 1 {
            return Err(BackendError::Config(format!(
                "unsupported backend fixture version {}",
                doc.version
            )));
        }
        Ok(Self::new(doc.responses))
    }

    pub fn from_fixture_file(path: &std::path::Path) -> Result<Self, BackendError> {
        Self::from_fixture(&std::fs::read_to_string(path)?)
    }

    /// Every request seen so far, in arrival order. Lets tests assert on
    /// the exact prompts the engine sent.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.requests.lock().unwrap().clone()
    }

    /// Resets call ordinals and the request log so the same fixture can
    /// drive a second identical run.
    pub fn reset(&self) {
        self.ordinals.lock().unwrap().clear();
        self.requests.lock().unwrap().clear();
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let key: Key = (request.agent_id.clone(), request.round, request.purpose);
        let ordinal = {
            let mut ordinals = self.ordinals.lock().unwrap();
            let slot = ordinals.entry(key.clone()).or_insert(0);
            let current = *slot;
            *slot += 1;
            current
        };
        self.requests.lock().unwrap().push(request.clone());
        self.responses
            .get(&(key.0, key.1, key.2, ordinal))
            .cloned()
            .ok_or(BackendError::FixtureMiss {
                agent_id: request.agent_id.clone(),
                round: request.round,
                purpose: request.purpose,
                ordinal,
            })
    }
}

#[derive(Default)]
pub struct ScriptedBackendBuilder {
    entries: Vec<ScriptedEntry>,
}

impl ScriptedBackendBuilder {
    /// Appends one response for the key, auto-assigning the next ordinal.
    pub fn response(mut self, agent_id: &str, round: u32, purpose: Purpose, text: &str) -> Self {
        self.with_tokens(agent_id, round, purpose, text, 0, 0)
    }

    pub fn with_tokens(
        mut self,
        agent_id: &str,
        round: u32,
        purpose: Purpose,
        text: &str,
        tokens_in: u64,
        tokens_out: u64,
    ) -> Self {
        let ordinal = self
            .entries
            .iter()
            .filter(|e| e.agent_id == agent_id && e.round == round && e.purpose == purpose)
            .count() as u32;
        self.entries.push(ScriptedEntry {
            agent_id: agent_id.to_string(),
            round,
            purpose,
            ordinal,
            text: text.to_string(),
            tokens_in,
            tokens_out,
        });
        self
    }

    pub fn entries(&self) -> &[ScriptedEntry] {
        &self.entries
    }

    pub fn to_fixture(&self) -> String {
        serde_json::to_string_pretty(&ScriptDocument { version: 1, responses: self.entries.clone() })
            .expect("fixture serialization cannot fail")
    }

    pub fn build(self) -> ScriptedBackend {
        ScriptedBackend::new(self.entries)
    }
}
