//! Dataset ingestion: one question per line of a newline-delimited JSON
//! file.
//!
//! Line format (version field optional, defaults to 1):
//! `{"id": "...", "body": "...", "answer_kind": "free_form" | "multiple_choice" | "numeric", "ground_truth": "..."?}`

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{AnswerKind, Question};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    #[serde(default = "default_version")]
    pub v: u32,
    pub id: String,
    pub body: String,
    pub answer_kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: duplicate question id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: question body is empty")]
    EmptyBody { line: usize },
    #[error("dataset io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset is empty")]
    Empty,
}

pub fn parse_dataset(text: &str) -> Result<Vec<Question>, DatasetError> {
    let mut questions = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in text.lines().enumerate() {
        let lineno = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|source| DatasetError::Parse { line: lineno, source })?;
        if record.body.trim().is_empty() {
            return Err(DatasetError::EmptyBody { line: lineno });
        }
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId { line: lineno, id: record.id });
        }
        questions.push(Question {
            id: record.id,
            body: record.body,
            answer_kind: record.answer_kind,
            ground_truth: record.ground_truth,
        });
    }
    if questions.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(questions)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Question>, DatasetError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn dataset_to_string(questions: &[Question]) -> String {
    questions
        .iter()
        .map(|q| {
            serde_json::to_string(&DatasetRecord {
                v: 1,
                id: q.id.clone(),
                body: q.body.clone(),
                answer_kind: q.answer_kind,
                ground_truth: q.ground_truth.clone(),
            })
            .expect("dataset serialization cannot fail")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
