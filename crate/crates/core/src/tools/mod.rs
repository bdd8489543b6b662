//! Tool-suite implementations: a sandboxed code executor with a hard
//! wall-clock limit, search providers for the three variants, and
//! scripted fakes for tests.

mod exec;
mod scripted;
mod search;

pub use exec::{execute_code, CodeSandbox};
pub use scripted::{CodeFixture, ScriptedToolSuite, SearchFixture, ToolFixtureDocument};
pub use search::{GoogleSearchClient, GoogleSearchConfig, LlmSearchProvider, SearchProvider};

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentPool, SearchVariant};

pub const INFORMATION_OPEN: &str = "<information>";
pub const INFORMATION_CLOSE: &str = "</information>";

/// Default caps on evidence size so prompts stay bounded.
pub const DEFAULT_MAX_BLOCKS: usize = 8;
pub const DEFAULT_MAX_SNIPPET_BYTES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
}

/// Outcome of one sandboxed code execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub wall_time: Duration,
    /// Set when the failure came from the sandbox itself (spawn error)
    /// rather than from the user code.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub operator_error: bool,
}

/// One retrieved snippet with its source tag. Snippets are normalized to
/// a single line at construction so the rendered evidence block
/// round-trips through parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBlock {
    pub source: String,
    pub snippet: String,
}

impl EvidenceBlock {
    pub fn new(source: &str, snippet: &str) -> Self {
        Self {
            source: source.replace(['[', ']'], "").split_whitespace().collect::<Vec<_>>().join(" "),
            snippet: snippet.split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }
}

/// Search results as the agent sees them, wrapped in information tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub blocks: Vec<EvidenceBlock>,
    pub variant_used: SearchVariant,
}

impl Evidence {
    /// Builds evidence, enforcing the per-result block and snippet caps.
    pub fn new(blocks: Vec<EvidenceBlock>, variant: SearchVariant) -> Self {
        Self::with_caps(blocks, variant, DEFAULT_MAX_BLOCKS, DEFAULT_MAX_SNIPPET_BYTES)
    }

    pub fn with_caps(
        mut blocks: Vec<EvidenceBlock>,
        variant: SearchVariant,
        max_blocks: usize,
        max_snippet_bytes: usize,
    ) -> Self {
        blocks.truncate(max_blocks);
        for block in &mut blocks {
            if block.snippet.len() > max_snippet_bytes {
                let mut cut = max_snippet_bytes;
                while !block.snippet.is_char_boundary(cut) {
                    cut -= 1;
                }
                block.snippet.truncate(cut);
                block.snippet.push_str(" [truncated]");
            }
        }
        Self { blocks, variant_used: variant }
    }

    pub fn error(message: &str, variant: SearchVariant) -> Self {
        Self::new(vec![EvidenceBlock::new("error", message)], variant)
    }

    /// Renders the wire form the agent reads: one `[source] snippet`
    /// line per block between the information tags.
    pub fn render(&self) -> String {
        let mut out = String::from(INFORMATION_OPEN);
        for block in &self.blocks {
            out.push('\n');
            out.push_str(&format!("[{}] {}", block.source, block.snippet));
        }
        out.push('\n');
        out.push_str(INFORMATION_CLOSE);
        out
    }

    /// Parses a rendered evidence section back into blocks.
    pub fn parse(text: &str, variant: SearchVariant) -> Option<Self> {
        let start = text.find(INFORMATION_OPEN)? + INFORMATION_OPEN.len();
        let end = text[start..].find(INFORMATION_CLOSE)? + start;
        let mut blocks = Vec::new();
        for line in text[start..end].lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rest = line.strip_prefix('[')?;
            let (source, snippet) = rest.split_once("] ")?;
            blocks.push(EvidenceBlock { source: source.to_string(), snippet: snippet.to_string() });
        }
        Some(Self { blocks, variant_used: variant })
    }
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("no code fixture for source:\n{0}")]
    MissingCodeFixture(String),
    #[error("no search fixture for query {query:?} variant {variant}")]
    MissingSearchFixture { query: String, variant: SearchVariant },
    #[error("search variant {0} has no configured provider")]
    UnconfiguredVariant(SearchVariant),
    #[error("tool fixture error: {0}")]
    Fixture(String),
    #[error("tool io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The tool surface the agent runtime calls into. Implementations must
/// tolerate concurrent calls.
pub trait ToolSuite: Send + Sync {
    fn execute_code(&self, source: &str) -> Result<ExecutionResult, ToolError>;
    fn search(&self, query: &str, variant: SearchVariant) -> Result<Evidence, ToolError>;
}

impl<T: ToolSuite + ?Sized> ToolSuite for Arc<T> {
    fn execute_code(&self, source: &str) -> Result<ExecutionResult, ToolError> {
        (**self).execute_code(source)
    }

    fn search(&self, query: &str, variant: SearchVariant) -> Result<Evidence, ToolError> {
        (**self).search(query, variant)
    }
}

fn dedup_key(snippet: &str) -> String {
    snippet.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Combines provider results for the `com` variant: external results
/// first, then inherent-search results, snippets deduplicated by
/// normalized text.
pub fn combine_evidence(gs: Vec<EvidenceBlock>, llm: Vec<EvidenceBlock>) -> Vec<EvidenceBlock> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for block in gs.into_iter().chain(llm) {
        if seen.insert(dedup_key(&block.snippet)) {
            out.push(block);
        }
    }
    out
}

/// Production tool suite: the process sandbox plus whatever search
/// providers are configured. Construction validates provider coverage
/// for the pool's variants so a missing provider is a startup error,
/// never a query-time surprise.
pub struct LiveToolSuite {
    sandbox: CodeSandbox,
    code_limit: Duration,
    providers: HashMap<SearchVariant, Arc<dyn SearchProvider>>,
}

impl LiveToolSuite {
    pub fn new(
        code_limit: Duration,
        gs: Option<Arc<dyn SearchProvider>>,
        llm: Option<Arc<dyn SearchProvider>>,
    ) -> Self {
        let mut providers: HashMap<SearchVariant, Arc<dyn SearchProvider>> = HashMap::new();
        if let Some(p) = gs {
            providers.insert(SearchVariant::Gs, p);
        }
        if let Some(p) = llm {
            providers.insert(SearchVariant::Llm, p);
        }
        Self { sandbox: CodeSandbox::default(), code_limit, providers }
    }

    /// Fails fast if the pool references a search variant with no
    /// configured provider (`com` needs both).
    pub fn validate_for_pool(&self, pool: &AgentPool) -> Result<(), ToolError> {
        for spec in &pool.specs {
            match spec.search_variant {
                Some(SearchVariant::Gs) if !self.providers.contains_key(&SearchVariant::Gs) => {
                    return Err(ToolError::UnconfiguredVariant(SearchVariant::Gs))
                }
                Some(SearchVariant::Llm) if !self.providers.contains_key(&SearchVariant::Llm) => {
                    return Err(ToolError::UnconfiguredVariant(SearchVariant::Llm))
                }
                Some(SearchVariant::Com) => {
                    if !self.providers.contains_key(&SearchVariant::Gs) {
                        return Err(ToolError::UnconfiguredVariant(SearchVariant::Gs));
                    }
                    if !self.providers.contains_key(&SearchVariant::Llm) {
                        return Err(ToolError::UnconfiguredVariant(SearchVariant::Llm));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn provider_blocks(&self, variant: SearchVariant, query: &str) -> Vec<EvidenceBlock> {
        match self.providers.get(&variant) {
            // Transport failures become an error block the agent can
            // read and react to; the loop keeps going.
            Some(provider) => match provider.search(query) {
                Ok(blocks) => blocks,
                Err(e) => vec![EvidenceBlock::new("error", &format!("search failed: {e}"))],
            },
            None => vec![EvidenceBlock::new("error", &format!("variant {variant} not configured"))],
        }
    }
}

impl ToolSuite for LiveToolSuite {
    fn execute_code(&self, source: &str) -> Result<ExecutionResult, ToolError> {
        Ok(self.sandbox.execute(source, self.code_limit))
    }

    fn search(&self, query: &str, variant: SearchVariant) -> Result<Evidence, ToolError> {
        let blocks = match variant {
            SearchVariant::Gs => self.provider_blocks(SearchVariant::Gs, query),
            SearchVariant::Llm => self.provider_blocks(SearchVariant::Llm, query),
            SearchVariant::Com => combine_evidence(
                self.provider_blocks(SearchVariant::Gs, query),
                self.provider_blocks(SearchVariant::Llm, query),
            ),
        };
        Ok(Evidence::new(blocks, variant))
    }
}
