//! Domain types and answer-text parsing shared by every other module.
//!
//! Answers travel between agents as plain text with a small wire
//! vocabulary: the final answer sits in the last `<<< ... >>>` span,
//! search queries in `<search>...</search>` tags, and code in a fenced
//! block opened by ` ```python `. Everything in this module is an
//! immutable value or a pure function.

use serde::{Deserialize, Serialize};

/// How a question's answer is interpreted when normalizing and comparing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    FreeForm,
    MultipleChoice,
    Numeric,
}

/// A task to be answered, optionally with a known ground truth (harness
/// datasets only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub body: String,
    pub answer_kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, body: impl Into<String>, kind: AnswerKind) -> Self {
        Self {
            id: id.into(),
            body: body.into(),
            answer_kind: kind,
            ground_truth: None,
        }
    }

    pub fn with_truth(mut self, truth: impl Into<String>) -> Self {
        self.ground_truth = Some(truth.into());
        self
    }
}

/// A normalized answer value. `fallback` is set when numeric
/// normalization could not parse the content and free-form rules were
/// applied instead.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalAnswer {
    pub value: String,
    pub kind: AnswerKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

/// One agent's answer for one round, with the raw model text it was
/// extracted from. `answer` is present iff span extraction succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAnswer {
    pub agent_id: String,
    pub round: u32,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<CanonicalAnswer>,
    pub trace_ref: String,
}

/// Which ledger counter a model inference is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Agent,
    Judge,
    Selector,
}

impl std::fmt::Display for Purpose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Purpose::Agent => write!(f, "agent"),
            Purpose::Judge => write!(f, "judge"),
            Purpose::Selector => write!(f, "selector"),
        }
    }
}

/// Counts of model inferences and tokens attributable to a run. All
/// counters only ever grow; mutation happens through the orchestrator's
/// single accounting writer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub agent_inferences: u64,
    pub judge_inferences: u64,
    pub selector_inferences: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub tool_calls: u64,
}

impl CostLedger {
    pub fn record_generation(&mut self, purpose: Purpose, tokens_in: u64, tokens_out: u64) {
        match purpose {
            Purpose::Agent => self.agent_inferences += 1,
            Purpose::Judge => self.judge_inferences += 1,
            Purpose::Selector => self.selector_inferences += 1,
        }
        self.input_tokens += tokens_in;
        self.output_tokens += tokens_out;
    }

    pub fn record_tool_calls(&mut self, n: u64) {
        self.tool_calls += n;
    }

    pub fn merge(&mut self, other: &CostLedger) {
        self.agent_inferences += other.agent_inferences;
        self.judge_inferences += other.judge_inferences;
        self.selector_inferences += other.selector_inferences;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.tool_calls += other.tool_calls;
    }

    pub fn total_inferences(&self) -> u64 {
        self.agent_inferences + self.judge_inferences + self.selector_inferences
    }

    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

/// Tools an agent is allowed to invoke.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPermissions {
    #[serde(default)]
    pub code: bool,
    #[serde(default)]
    pub search: bool,
}

impl ToolPermissions {
    pub fn none() -> Self {
        Self { code: false, search: false }
    }

    pub fn code_only() -> Self {
        Self { code: true, search: false }
    }

    pub fn search_only() -> Self {
        Self { code: false, search: true }
    }

    pub fn both() -> Self {
        Self { code: true, search: true }
    }
}

/// What an agent response asks the runtime to do next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// The response carries a final-answer span (content included).
    Final(String),
    /// A permitted fenced code block to execute.
    Code(String),
    /// A permitted search query.
    Search(String),
    /// Nothing actionable; keep reasoning.
    Continue,
}

const SPAN_OPEN: &str = "<<<";
const SPAN_CLOSE: &str = ">>>";
const SEARCH_OPEN: &str = "<search>";
const SEARCH_CLOSE: &str = "</search>";
const CODE_FENCE_OPEN: &str = "```python";
const CODE_FENCE_CLOSE: &str = "```";

/// Returns the content of the last well-formed `<<< ... >>>` span.
///
/// Spans are enumerated left to right; each span is the shortest match
/// between a `<<<` and the next `>>>`, and the last one wins (the
/// prompts tell the model to put the answer at the end of its
/// response). Unbalanced markers yield no span.
pub fn extract_answer_span(raw: &str) -> Option<&str> {
    let mut last = None;
    let mut pos = 0;
    while let Some(open) = raw[pos..].find(SPAN_OPEN) {
        let start = pos + open + SPAN_OPEN.len();
        match raw[start..].find(SPAN_CLOSE) {
            Some(close) => {
                last = Some(&raw[start..start + close]);
                pos = start + close + SPAN_CLOSE.len();
            }
            None => break,
        }
    }
    last
}

/// Extracts the last answer span and canonicalizes it with free-form
/// rules. Callers that know the question kind should canonicalize the
/// span themselves via [`canonicalize`].
pub fn extract_final_answer(raw: &str) -> Option<CanonicalAnswer> {
    extract_answer_span(raw).map(|s| canonicalize(s, AnswerKind::FreeForm))
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Leading multiple-choice option patterns: `(A)`, `A)`, `A.`, or a bare
/// letter. Detection is rule-based and fixed so scoring stays
/// deterministic.
fn leading_choice_letter(trimmed: &str) -> Option<char> {
    let mut chars = trimmed.chars();
    let first = chars.next()?;
    if first == '(' {
        let letter = chars.next()?;
        if letter.is_ascii_alphabetic() && chars.next() == Some(')') {
            return Some(letter.to_ascii_lowercase());
        }
        return None;
    }
    if !first.is_ascii_alphabetic() {
        return None;
    }
    match chars.next() {
        None => Some(first.to_ascii_lowercase()),
        Some(')') | Some('.') => Some(first.to_ascii_lowercase()),
        Some(c) if c.is_whitespace() => Some(first.to_ascii_lowercase()),
        _ => None,
    }
}

/// Scans `text` for plain decimal literals (optional sign, digits,
/// optional fractional part). Returns the sole literal if exactly one is
/// present. Hand-rolled so tests can check it against an independent
/// regex oracle.
fn find_sole_numeric_literal(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut literals = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let signed = (c == b'+' || c == b'-')
            && i + 1 < bytes.len()
            && (bytes[i + 1].is_ascii_digit() || bytes[i + 1] == b'.');
        if c.is_ascii_digit() || c == b'.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() || signed {
            let start = i;
            if signed {
                i += 1;
            }
            let mut seen_digit = false;
            let mut seen_dot = false;
            while i < bytes.len() {
                if bytes[i].is_ascii_digit() {
                    seen_digit = true;
                    i += 1;
                } else if bytes[i] == b'.' && !seen_dot && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() {
                    seen_dot = true;
                    i += 1;
                } else {
                    break;
                }
            }
            if seen_digit {
                literals.push(text[start..i].to_string());
                if literals.len() > 1 {
                    return None;
                }
            }
        } else {
            i += 1;
        }
    }
    literals.pop()
}

/// Renders a plain decimal literal with no leading integer zeros and no
/// trailing fractional zeros. `-0` normalizes to `0`.
fn canonical_decimal(literal: &str) -> Option<String> {
    let (neg, rest) = match literal.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, literal.strip_prefix('+').unwrap_or(literal)),
    };
    if rest.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (rest, ""),
    };
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let int_trimmed = int_part.trim_start_matches('0');
    let int_norm = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_norm = frac_part.trim_end_matches('0');
    let zero = int_norm == "0" && frac_norm.is_empty();
    let mut out = String::new();
    if neg && !zero {
        out.push('-');
    }
    out.push_str(int_norm);
    if !frac_norm.is_empty() {
        out.push('.');
        out.push_str(frac_norm);
    }
    Some(out)
}

/// Normalizes raw answer text for the given kind.
///
/// Free-form: trimmed, internal whitespace collapsed. Multiple-choice:
/// reduced to the case-folded option letter when a leading `(A)` / `A)`
/// / `A.` / bare-letter pattern is found, otherwise the case-folded
/// collapsed text. Numeric: the value re-rendered in canonical decimal
/// form; unparseable content falls back to free-form rules with the
/// `fallback` flag set.
pub fn canonicalize(raw: &str, kind: AnswerKind) -> CanonicalAnswer {
    let trimmed = raw.trim();
    match kind {
        AnswerKind::FreeForm => CanonicalAnswer {
            value: collapse_whitespace(trimmed),
            kind,
            fallback: false,
        },
        AnswerKind::MultipleChoice => {
            let value = match leading_choice_letter(trimmed) {
                Some(letter) => letter.to_string(),
                None => collapse_whitespace(trimmed).to_lowercase(),
            };
            CanonicalAnswer { value, kind, fallback: false }
        }
        AnswerKind::Numeric => {
            if let Some(v) = canonical_decimal(trimmed) {
                return CanonicalAnswer { value: v, kind, fallback: false };
            }
            if let Some(lit) = find_sole_numeric_literal(trimmed) {
                if let Some(v) = canonical_decimal(&lit) {
                    return CanonicalAnswer { value: v, kind, fallback: false };
                }
            }
            CanonicalAnswer {
                value: collapse_whitespace(trimmed),
                kind,
                fallback: true,
            }
        }
    }
}

/// Extracts the body of the first ` ```python ` fenced block, if any.
pub fn extract_code_block(raw: &str) -> Option<&str> {
    let open = raw.find(CODE_FENCE_OPEN)?;
    let after_fence = &raw[open + CODE_FENCE_OPEN.len()..];
    let body_start = after_fence.find('\n')? + 1;
    let body = &after_fence[body_start..];
    let close = body.find(CODE_FENCE_CLOSE)?;
    Some(body[..close].trim_end_matches('\n'))
}

/// Extracts the first `<search>...</search>` query, if any.
pub fn extract_search_query(raw: &str) -> Option<&str> {
    let open = raw.find(SEARCH_OPEN)?;
    let start = open + SEARCH_OPEN.len();
    let close = raw[start..].find(SEARCH_CLOSE)?;
    Some(raw[start..start + close].trim())
}

/// Classifies a model response into the next runtime action.
///
/// Branch order: a final-answer span always wins; then a permitted code
/// block; then a permitted search query; otherwise continue. A response
/// whose only proposal is a disallowed tool maps to continue.
pub fn classify_action(raw: &str, permissions: ToolPermissions) -> Action {
    if let Some(span) = extract_answer_span(raw) {
        return Action::Final(span.to_string());
    }
    if permissions.code {
        if let Some(src) = extract_code_block(raw) {
            return Action::Code(src.to_string());
        }
    }
    if permissions.search {
        if let Some(q) = extract_search_query(raw) {
            return Action::Search(q.to_string());
        }
    }
    Action::Continue
}
