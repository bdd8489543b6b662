//! Record/replay wrapper for model backends.
//!
//! Recording persists every request/response pair as one JSON line.
//! Replay serves responses keyed on (agent_id, round, purpose, ordinal)
//! and verifies the live request's context hash against the recording:
//! any prompt drift surfaces as an explicit divergence error instead of
//! a silently wrong replay.
//!
//! Record fields, one JSON object per line:
//! - `v`: schema version (1)
//! - `seq`: global arrival sequence number
//! - `agent_id`, `round`, `purpose`: request identity
//! - `ordinal`: per-(agent_id, round, purpose) call counter
//! - `temperature`: request temperature
//! - `context_sha256`: hex SHA-256 of the request context
//! - `text`, `tokens_in`, `tokens_out`: the recorded response

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, GenerationRequest, GenerationResponse, ModelBackend};
use crate::core::Purpose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub v: u32,
    pub seq: u64,
    pub agent_id: String,
    pub round: u32,
    pub purpose: Purpose,
    pub ordinal: u32,
    pub temperature: f64,
    pub context_sha256: String,
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

pub fn context_hash(context: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(context.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Wraps an inner backend and appends every request/response pair to a
/// newline-delimited recording sink.
pub struct RecordingBackend<B> {
    inner: B,
    state: Mutex<RecordState>,
}

struct RecordState {
    sink: Box<dyn Write + Send>,
    seq: u64,
    ordinals: HashMap<(String, u32, Purpose), u32>,
}

impl<B: ModelBackend> RecordingBackend<B> {
    pub fn new(inner: B, sink: Box<dyn Write + Send>) -> Self {
        Self {
            inner,
            state: Mutex::new(RecordState { sink, seq: 0, ordinals: HashMap::new() }),
        }
    }

    pub fn to_file(inner: B, path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::create(path)?;
        Ok(Self::new(inner, Box::new(std::io::BufWriter::new(file))))
    }
}

impl<B: ModelBackend> ModelBackend for RecordingBackend<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let response = self.inner.generate(request)?;
        let mut state = self.state.lock().unwrap();
        let ordinal = {
            let slot = state
                .ordinals
                .entry((request.agent_id.clone(), request.round, request.purpose))
                .or_insert(0);
            let current = *slot;
            *slot += 1;
            current
        };
        let entry = RecordEntry {
            v: 1,
            seq: state.seq,
            agent_id: request.agent_id.clone(),
            round: request.round,
            purpose: request.purpose,
            ordinal,
            temperature: request.temperature,
            context_sha256: context_hash(&request.context),
            text: response.text.clone(),
            tokens_in: response.tokens_in,
            tokens_out: response.tokens_out,
        };
        state.seq += 1;
        let line = serde_json::to_string(&entry)?;
        state.sink.write_all(line.as_bytes())?;
        state.sink.write_all(b"\n")?;
        state.sink.flush()?;
        Ok(response)
    }
}

/// Parses a recording from newline-delimited JSON.
pub fn load_recording(text: &str) -> Result<Vec<RecordEntry>, BackendError> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: RecordEntry = serde_json::from_str(line).map_err(|e| {
            BackendError::Config(format!("recording line {}: {e}", lineno + 1))
        })?;
        if entry.v != 1 {
            return Err(BackendError::Config(format!(
                "recording line {}: unsupported version {}",
                lineno + 1,
                entry.v
            )));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Serves a recording back, verifying each live request against the
/// recorded context hash.
pub struct ReplayBackend {
    by_key: HashMap<(String, u32, Purpose), Vec<RecordEntry>>,
    ordinals: Mutex<HashMap<(String, u32, Purpose), u32>>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<RecordEntry>) -> Self {
        let mut by_key: HashMap<(String, u32, Purpose), Vec<RecordEntry>> = HashMap::new();
        for entry in entries {
            by_key
                .entry((entry.agent_id.clone(), entry.round, entry.purpose))
                .or_default()
                .push(entry);
        }
        for list in by_key.values_mut() {
            list.sort_by_key(|e| e.ordinal);
        }
        Self { by_key, ordinals: Mutex::new(HashMap::new()) }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)?;
        let mut text = String::new();
        let mut reader = std::io::BufReader::new(file);
        use std::io::Read;
        reader.read_to_string(&mut text)?;
        Ok(Self::new(load_recording(&text)?))
    }
}

impl ModelBackend for ReplayBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let key = (request.agent_id.clone(), request.round, request.purpose);
        let ordinal = {
            let mut ordinals = self.ordinals.lock().unwrap();
            let slot = ordinals.entry(key.clone()).or_insert(0);
            let current = *slot;
            *slot += 1;
            current
        };
        let recorded = self.by_key.get(&key).and_then(|list| list.get(ordinal as usize));
        let entry = match recorded {
            Some(e) => e,
            None => {
                return Err(BackendError::Exhausted {
                    agent_id: request.agent_id.clone(),
                    round: request.round,
                    purpose: request.purpose,
                    ordinal,
                    recorded: self.by_key.get(&key).map(|l| l.len() as u32).unwrap_or(0),
                })
            }
        };
        let actual = context_hash(&request.context);
        if actual != entry.context_sha256 {
            return Err(BackendError::Divergence {
                agent_id: request.agent_id.clone(),
                round: request.round,
                purpose: request.purpose,
                ordinal,
                expected: entry.context_sha256.clone(),
                actual,
            });
        }
        Ok(GenerationResponse {
            text: entry.text.clone(),
            tokens_in: entry.tokens_in,
            tokens_out: entry.tokens_out,
        })
    }
}

/// Convenience for tests: records into an in-memory buffer.
pub struct SharedBuffer(pub std::sync::Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[allow(dead_code)]
fn read_lines(path: &Path) -> std::io::Result<Vec<String>> {
    let file = std::fs::File::open(path)?;
    std::io::BufReader::new(file).lines().collect()
}
