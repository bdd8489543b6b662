//! The per-agent tool-interaction loop: alternate model generation with
//! tool execution under a budget, then force a decision.
//!
//! The loop generates, classifies the response, and either stops on a
//! final-answer span, executes a permitted tool (consuming budget), or
//! nudges the model to keep reasoning (not consuming budget, capped so
//! a stuck model cannot loop forever). When the budget runs out, one
//! forced generation produces the final response; if even that lacks an
//! answer span the trace ends with an empty answer.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, GenerationRequest, ModelBackend};
use crate::core::{
    classify_action, extract_answer_span, Action, AgentAnswer, CanonicalAnswer, Purpose,
};
use crate::agents::AgentSpec;
use crate::core::canonicalize;
use crate::core::AnswerKind;
use crate::tools::{ExecStatus, ExecutionResult, ToolSuite};

pub const CODE_RESULT_LABEL: &str = "Code result: ";
pub const RUNTIME_ERROR_LABEL: &str = "Runtime error: ";
pub const EVIDENCE_LABEL: &str = "Retrieved evidence: ";
pub const NUDGE_LINE: &str = "Continue reasoning with current context.";
pub const TRUNCATION_MARKER: &str = " [...payload truncated]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Generation,
    CodeResult,
    SearchResult,
    Nudge,
}

/// One entry in the running context. Tool and nudge payloads carry
/// their literal context labels so the trace reads exactly like the
/// context the model saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub kind: StepKind,
    pub payload: String,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
}

impl Step {
    fn generation(text: &str, tokens_in: u64, tokens_out: u64) -> Self {
        Self { kind: StepKind::Generation, payload: text.to_string(), tokens_in, tokens_out }
    }

    fn tool(kind: StepKind, payload: String) -> Self {
        Self { kind, payload, tokens_in: 0, tokens_out: 0 }
    }
}

/// One agent's full interaction for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub agent_id: String,
    pub round: u32,
    pub steps: Vec<Step>,
    pub final_answer: AgentAnswer,
    pub budget_used: u32,
    #[serde(skip, default)]
    pub elapsed: Duration,
    /// Present when the backend or tool suite failed; the trace still
    /// carries an (empty) final answer and the round proceeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AgentTrace {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn generation_count(&self) -> u64 {
        self.steps.iter().filter(|s| s.kind == StepKind::Generation).count() as u64
    }

    pub fn tokens(&self) -> (u64, u64) {
        self.steps
            .iter()
            .fold((0, 0), |(tin, tout), s| (tin + s.tokens_in, tout + s.tokens_out))
    }
}

#[derive(Debug, Clone)]
pub struct RuntimeOptions {
    /// Max consecutive nudges before the loop treats the situation as
    /// budget exhaustion and forces a decision.
    pub nudge_cap: u32,
    /// Per-tool-payload context cap in bytes.
    pub context_cap: usize,
    /// Retries on transient backend transport errors. Content failures
    /// are never retried.
    pub transport_retries: u32,
    /// Sampling temperature override (schedule-driven); falls back to
    /// the spec temperature when absent.
    pub temperature_override: Option<f64>,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        Self {
            nudge_cap: 2,
            context_cap: 64 * 1024,
            transport_retries: 2,
            temperature_override: None,
        }
    }
}

fn truncate_payload(payload: &str, cap: usize) -> String {
    if payload.len() <= cap {
        return payload.to_string();
    }
    let mut cut = cap;
    while !payload.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}{}", &payload[..cut], TRUNCATION_MARKER)
}

/// Appends one step to the running context. Generations are appended
/// verbatim; tool results arrive with their literal labels already in
/// the payload. Tool payloads are truncated at the context cap with an
/// explicit marker.
pub fn append_context(context: &str, step: &Step, context_cap: usize) -> String {
    let payload = match step.kind {
        StepKind::CodeResult | StepKind::SearchResult => truncate_payload(&step.payload, context_cap),
        _ => step.payload.clone(),
    };
    if context.is_empty() {
        payload
    } else {
        format!("{context}\n\n{payload}")
    }
}

fn code_result_payload(result: &ExecutionResult) -> String {
    match result.status {
        ExecStatus::Ok => format!("{CODE_RESULT_LABEL}{}", result.stdout),
        ExecStatus::RuntimeError => format!("{RUNTIME_ERROR_LABEL}{}", result.stderr),
        // Timeouts go back to the model as a runtime error so it can
        // regenerate; only the final round marks the task failed.
        ExecStatus::Timeout => format!(
            "{RUNTIME_ERROR_LABEL}code runtime error: execution exceeded the time limit"
        ),
    }
}

fn generate_with_retries(
    backend: &dyn ModelBackend,
    request: &GenerationRequest,
    retries: u32,
) -> Result<crate::backend::GenerationResponse, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.generate(request) {
            Ok(response) => return Ok(response),
            Err(e) if e.is_retryable() && attempt < retries => {
                attempt += 1;
                let jitter = (std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.subsec_millis() % 50)
                    .unwrap_or(0)) as u64;
                std::thread::sleep(Duration::from_millis(50 * attempt as u64 + jitter));
            }
            Err(e) => return Err(e),
        }
    }
}

fn empty_answer(spec: &AgentSpec, round: u32, trace_ref: &str) -> AgentAnswer {
    AgentAnswer {
        agent_id: spec.agent_id.clone(),
        round,
        raw_response: String::new(),
        answer: None,
        trace_ref: trace_ref.to_string(),
    }
}

/// Runs one agent for one round against the given prompt.
///
/// A backend or tool failure never panics and never aborts the round:
/// the returned trace carries an error annotation and an empty final
/// answer.
pub fn agent_call(
    spec: &AgentSpec,
    round: u32,
    sample: u32,
    prompt: &str,
    backend: &dyn ModelBackend,
    tools: &dyn ToolSuite,
    options: &RuntimeOptions,
) -> AgentTrace {
    let start = Instant::now();
    let trace_ref = format!("{}#r{round}s{sample}", spec.agent_id);
    let temperature = options.temperature_override.unwrap_or(spec.temperature);
    let mut context = prompt.to_string();
    let mut steps: Vec<Step> = Vec::new();
    let mut budget_used = 0u32;
    let mut consecutive_nudges = 0u32;
    let mut final_text: Option<String> = None;

    let mut generate = |context: &str, steps: &mut Vec<Step>| -> Result<String, String> {
        let request = GenerationRequest::new(context, &spec.agent_id, round, Purpose::Agent)
            .with_temperature(temperature);
        match generate_with_retries(backend, &request, options.transport_retries) {
            Ok(response) => {
                steps.push(Step::generation(&response.text, response.tokens_in, response.tokens_out));
                Ok(response.text)
            }
            Err(e) => Err(format!("backend failure: {e}")),
        }
    };

    while budget_used < spec.tool_budget {
        let text = match generate(&context, &mut steps) {
            Ok(t) => t,
            Err(e) => {
                return AgentTrace {
                    agent_id: spec.agent_id.clone(),
                    round,
                    steps,
                    final_answer: empty_answer(spec, round, &trace_ref),
                    budget_used,
                    elapsed: start.elapsed(),
                    error: Some(e),
                }
            }
        };
        context = append_context(&context, steps.last().unwrap(), options.context_cap);

        match classify_action(&text, spec.tool_permissions) {
            Action::Final(_) => {
                final_text = Some(text);
                break;
            }
            Action::Code(source) => {
                let result = match tools.execute_code(&source) {
                    Ok(r) => r,
                    Err(e) => {
                        return AgentTrace {
                            agent_id: spec.agent_id.clone(),
                            round,
                            steps,
                            final_answer: empty_answer(spec, round, &trace_ref),
                            budget_used,
                            elapsed: start.elapsed(),
                            error: Some(format!("tool failure: {e}")),
                        }
                    }
                };
                let step = Step::tool(
                    StepKind::CodeResult,
                    truncate_payload(&code_result_payload(&result), options.context_cap),
                );
                context = append_context(&context, &step, options.context_cap);
                steps.push(step);
                budget_used += 1;
                consecutive_nudges = 0;
            }
            Action::Search(query) => {
                let variant = match spec.search_variant {
                    Some(v) => v,
                    // Unroutable search (no variant configured); treat
                    // as a nudge so the loop stays live.
                    None => {
                        if consecutive_nudges >= options.nudge_cap {
                            break;
                        }
                        let step = Step::tool(StepKind::Nudge, NUDGE_LINE.to_string());
                        context = append_context(&context, &step, options.context_cap);
                        steps.push(step);
                        consecutive_nudges += 1;
                        continue;
                    }
                };
                let evidence = match tools.search(&query, variant) {
                    Ok(e) => e,
                    Err(e) => {
                        return AgentTrace {
                            agent_id: spec.agent_id.clone(),
                            round,
                            steps,
                            final_answer: empty_answer(spec, round, &trace_ref),
                            budget_used,
                            elapsed: start.elapsed(),
                            error: Some(format!("tool failure: {e}")),
                        }
                    }
                };
                let step = Step::tool(
                    StepKind::SearchResult,
                    truncate_payload(
                        &format!("{EVIDENCE_LABEL}{}", evidence.render()),
                        options.context_cap,
                    ),
                );
                context = append_context(&context, &step, options.context_cap);
                steps.push(step);
                budget_used += 1;
                consecutive_nudges = 0;
            }
            Action::Continue => {
                if consecutive_nudges >= options.nudge_cap {
                    break;
                }
                let step = Step::tool(StepKind::Nudge, NUDGE_LINE.to_string());
                context = append_context(&context, &step, options.context_cap);
                steps.push(step);
                consecutive_nudges += 1;
            }
        }
    }

    let mut error = None;
    let final_text = match final_text {
        Some(t) => t,
        None => match generate(&context, &mut steps) {
            Ok(t) => t,
            Err(e) => {
                error = Some(e);
                String::new()
            }
        },
    };

    let answer = extract_answer_span(&final_text).map(|s| canonicalize(s, AnswerKind::FreeForm));
    AgentTrace {
        agent_id: spec.agent_id.clone(),
        round,
        steps,
        final_answer: AgentAnswer {
            agent_id: spec.agent_id.clone(),
            round,
            raw_response: final_text,
            answer,
            trace_ref,
        },
        budget_used,
        elapsed: start.elapsed(),
        error,
    }
}

/// Re-canonicalizes a trace's final answer for a specific answer kind.
pub fn answer_for_kind(trace: &AgentTrace, kind: AnswerKind) -> Option<CanonicalAnswer> {
    extract_answer_span(&trace.final_answer.raw_response).map(|s| canonicalize(s, kind))
}
