//! Search providers behind the minimal query-in, snippets-out contract.
//!
//! One real implementation per variant: an external search API client
//! for `gs` and an inherent-search pass through the model backend for
//! `llm`. Credentials come from environment variables named in the
//! configuration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EvidenceBlock;
use crate::backend::{GenerationRequest, ModelBackend};
use crate::core::Purpose;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search transport error: {0}")]
    Transport(String),
    #[error("search configuration error: {0}")]
    Config(String),
}

/// Query in, ranked snippets out. Implementations must be safe for
/// concurrent use.
pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<EvidenceBlock>, SearchError>;
}

/// Google Programmable Search (Custom Search JSON API) client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoogleSearchConfig {
    #[serde(default = "default_gs_endpoint")]
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Environment variable holding the search engine id (cx).
    pub engine_id_env: String,
    #[serde(default = "default_result_count")]
    pub result_count: u32,
}

fn default_gs_endpoint() -> String {
    "https://www.googleapis.com/customsearch/v1".to_string()
}

fn default_result_count() -> u32 {
    5
}

pub struct GoogleSearchClient {
    config: GoogleSearchConfig,
    api_key: String,
    engine_id: String,
    client: reqwest::blocking::Client,
}

impl GoogleSearchClient {
    pub fn new(config: GoogleSearchConfig) -> Result<Self, SearchError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| SearchError::Config(format!("{} is not set", config.api_key_env)))?;
        let engine_id = std::env::var(&config.engine_id_env)
            .map_err(|_| SearchError::Config(format!("{} is not set", config.engine_id_env)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        Ok(Self { config, api_key, engine_id, client })
    }
}

#[derive(Debug, Deserialize)]
struct GoogleResponse {
    #[serde(default)]
    items: Vec<GoogleItem>,
}

#[derive(Debug, Deserialize)]
struct GoogleItem {
    #[serde(default)]
    title: String,
    #[serde(default)]
    link: String,
    #[serde(default)]
    snippet: String,
}

/// Parses a Custom Search JSON body into evidence blocks.
pub fn parse_google_response(body: &str) -> Result<Vec<EvidenceBlock>, SearchError> {
    let response: GoogleResponse = serde_json::from_str(body)
        .map_err(|e| SearchError::Transport(format!("malformed search response: {e}")))?;
    Ok(response
        .items
        .into_iter()
        .map(|item| EvidenceBlock::new(&item.link, &format!("{}: {}", item.title, item.snippet)))
        .collect())
}

impl SearchProvider for GoogleSearchClient {
    fn search(&self, query: &str) -> Result<Vec<EvidenceBlock>, SearchError> {
        let response = self
            .client
            .get(&self.config.endpoint)
            .query(&[
                ("key", self.api_key.as_str()),
                ("cx", self.engine_id.as_str()),
                ("q", query),
                ("num", &self.config.result_count.to_string()),
            ])
            .send()
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| SearchError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(SearchError::Transport(format!("search API returned {status}: {body}")));
        }
        parse_google_response(&body)
    }
}

const LLM_SEARCH_INSTRUCTION: &str = "Search the web for the query below and report the most relevant factual findings as short snippets, one per line.\n\nQuery: ";

/// Inherent-search provider: routes the query through a search-enabled
/// model backend and treats the response as opaque evidence. The handle
/// is tool-side and separate from the run's ledger accounting; the tool
/// call itself is what the ledger counts.
pub struct LlmSearchProvider {
    backend: Arc<dyn ModelBackend>,
}

impl LlmSearchProvider {
    pub fn new(backend: Arc<dyn ModelBackend>) -> Self {
        Self { backend }
    }
}

impl SearchProvider for LlmSearchProvider {
    fn search(&self, query: &str) -> Result<Vec<EvidenceBlock>, SearchError> {
        let request =
            GenerationRequest::new(format!("{LLM_SEARCH_INSTRUCTION}{query}"), "llm-search", 0, Purpose::Agent);
        let response = self
            .backend
            .generate(&request)
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        Ok(response
            .text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|line| EvidenceBlock::new("llm", line))
            .collect())
    }
}
