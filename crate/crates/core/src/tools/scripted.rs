//! Fixture-driven tool suite for tests: code executions and searches
//! answered purely from a replay document, with loud errors on misses.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Evidence, EvidenceBlock, ExecStatus, ExecutionResult, ToolError, ToolSuite};
use crate::agents::SearchVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeFixture {
    pub source: String,
    #[serde(default = "default_status")]
    pub status: ExecStatus,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
}

fn default_status() -> ExecStatus {
    ExecStatus::Ok
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchFixture {
    pub query: String,
    pub variant: SearchVariant,
    /// (source tag, snippet) pairs.
    pub blocks: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolFixtureDocument {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub code: Vec<CodeFixture>,
    #[serde(default)]
    pub search: Vec<SearchFixture>,
}

fn default_version() -> u32 {
    1
}

pub struct ScriptedToolSuite {
    code: HashMap<String, CodeFixture>,
    search: HashMap<(String, SearchVariant), Vec<EvidenceBlock>>,
}

impl ScriptedToolSuite {
    pub fn new(document: ToolFixtureDocument) -> Result<Self, ToolError> {
        if document.version != 1 {
            return Err(ToolError::Fixture(format!(
                "unsupported tool fixture version {}",
                document.version
            )));
        }
        let code = document.code.into_iter().map(|c| (c.source.clone(), c)).collect();
        let search = document
            .search
            .into_iter()
            .map(|s| {
                let blocks = s
                    .blocks
                    .iter()
                    .map(|(source, snippet)| EvidenceBlock::new(source, snippet))
                    .collect();
                ((s.query, s.variant), blocks)
            })
            .collect();
        Ok(Self { code, search })
    }

    pub fn from_fixture(text: &str) -> Result<Self, ToolError> {
        let document: ToolFixtureDocument =
            serde_json::from_str(text).map_err(|e| ToolError::Fixture(e.to_string()))?;
        Self::new(document)
    }

    pub fn from_fixture_file(path: &std::path::Path) -> Result<Self, ToolError> {
        Self::from_fixture(&std::fs::read_to_string(path)?)
    }

    pub fn empty() -> Self {
        Self { code: HashMap::new(), search: HashMap::new() }
    }

    pub fn builder() -> ScriptedToolSuiteBuilder {
        ScriptedToolSuiteBuilder::default()
    }
}

#[derive(Default)]
pub struct ScriptedToolSuiteBuilder {
    document: ToolFixtureDocument,
}

impl ScriptedToolSuiteBuilder {
    pub fn code_ok(mut self, source: &str, stdout: &str) -> Self {
        self.document.code.push(CodeFixture {
            source: source.to_string(),
            status: ExecStatus::Ok,
            stdout: stdout.to_string(),
            stderr: String::new(),
        });
        self
    }

    pub fn code_error(mut self, source: &str, stderr: &str) -> Self {
        self.document.code.push(CodeFixture {
            source: source.to_string(),
            status: ExecStatus::RuntimeError,
            stdout: String::new(),
            stderr: stderr.to_string(),
        });
        self
    }

    pub fn search(mut self, query: &str, variant: SearchVariant, blocks: &[(&str, &str)]) -> Self {
        self.document.search.push(SearchFixture {
            query: query.to_string(),
            variant,
            blocks: blocks.iter().map(|(s, t)| (s.to_string(), t.to_string())).collect(),
        });
        self
    }

    pub fn build(mut self) -> ScriptedToolSuite {
        self.document.version = 1;
        ScriptedToolSuite::new(self.document).expect("builder document is valid")
    }
}

impl ToolSuite for ScriptedToolSuite {
    fn execute_code(&self, source: &str) -> Result<ExecutionResult, ToolError> {
        let fixture = self
            .code
            .get(source)
            .ok_or_else(|| ToolError::MissingCodeFixture(source.to_string()))?;
        Ok(ExecutionResult {
            status: fixture.status,
            stdout: fixture.stdout.clone(),
            stderr: fixture.stderr.clone(),
            wall_time: Duration::ZERO,
            operator_error: false,
        })
    }

    fn search(&self, query: &str, variant: SearchVariant) -> Result<Evidence, ToolError> {
        let blocks = self
            .search
            .get(&(query.to_string(), variant))
            .ok_or_else(|| ToolError::MissingSearchFixture { query: query.to_string(), variant })?;
        Ok(Evidence::new(blocks.clone(), variant))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_lookup_by_source() {
        let suite = ScriptedToolSuite::builder().code_ok("print(3+4)", "7").build();
        let result = suite.execute_code("print(3+4)").unwrap();
        assert_eq!(result.status, ExecStatus::Ok);
        assert_eq!(result.stdout, "7");
    }

    #[test]
    fn unmatched_query_error_names_query() {
        let suite = ScriptedToolSuite::empty();
        let err = suite.search("mystery question", SearchVariant::Gs).unwrap_err();
        assert!(err.to_string().contains("mystery question"));
    }

    #[test]
    fn replays_are_pure() {
        let suite = ScriptedToolSuite::builder()
            .search("capital of France", SearchVariant::Gs, &[("gs", "Paris")])
            .build();
        let first = suite.search("capital of France", SearchVariant::Gs).unwrap();
        let second = suite.search("capital of France", SearchVariant::Gs).unwrap();
        assert_eq!(first, second);
        assert!(first.blocks[0].snippet.contains("Paris"));
    }

    #[test]
    fn fixture_document_round_trip() {
        let document = ToolFixtureDocument {
            version: 1,
            code: vec![CodeFixture {
                source: "print(1)".into(),
                status: ExecStatus::Ok,
                stdout: "1".into(),
                stderr: String::new(),
            }],
            search: vec![SearchFixture {
                query: "q".into(),
                variant: SearchVariant::Com,
                blocks: vec![("gs".into(), "G".into())],
            }],
        };
        let text = serde_json::to_string(&document).unwrap();
        let suite = ScriptedToolSuite::from_fixture(&text).unwrap();
        assert!(suite.execute_code("print(1)").is_ok());
        assert!(suite.search("q", SearchVariant::Com).is_ok());
    }
}
