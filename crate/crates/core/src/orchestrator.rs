//! The round loop: concurrent agent execution, message passing,
//! termination policies, and final-answer selection.
//!
//! Each round builds every agent's prompt from the previous round's
//! answers, runs all agent calls concurrently, and collects them at a
//! barrier before any round-r answer can influence another round-r
//! prompt. From the minimum round onward the termination policy decides
//! whether to stop; the final answer is then selected from the last
//! round.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    build_judge_prompt, build_round_prompt, build_selector_prompt, AgentPool, PoolError,
};
use crate::backend::{GenerationRequest, ModelBackend};
use crate::core::{
    canonicalize, extract_answer_span, AgentAnswer, CanonicalAnswer, CostLedger, Purpose, Question,
};
use crate::runtime::{agent_call, AgentTrace, RuntimeOptions};
use crate::tools::ToolSuite;

/// When refinement stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationPolicy {
    /// Ask the model whether the answers show consensus (YES/NO span).
    LlmJudge,
    /// Stop when the majority answer stabilizes across two consecutive
    /// rounds.
    RuleStabilization,
    /// Always run to the maximum round.
    Fixed,
}

/// How the final answer is chosen from the last round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    Majority,
    Random,
    LlmSelector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pool: AgentPool,
    /// Earliest round at which any policy may stop.
    pub r_min: u32,
    pub r_max: u32,
    pub termination: TerminationPolicy,
    pub selection: SelectionStrategy,
    /// Cost-tradeoff scalar, recorded for the objective report only;
    /// never consulted by control flow.
    pub lambda: f64,
    /// Per-round samples multiplier; rounds beyond the schedule use 1.
    pub samples_schedule: Vec<u32>,
    /// Per-sample temperatures when a round runs multiple passes; sample
    /// j uses entry j mod len. Empty means the spec temperature.
    pub temperature_schedule: Vec<f64>,
    pub code_limit: Duration,
    /// Concurrent agent calls per round.
    pub parallelism: usize,
    pub context_cap: usize,
    pub seed: u64,
    /// Optional per-round pool override (cycled); the schedule is
    /// assembled by the harness, the orchestrator only indexes it.
    pub pool_schedule: Option<Vec<AgentPool>>,
}

impl RunConfig {
    pub fn new(pool: AgentPool) -> Self {
        Self {
            pool,
            r_min: 2,
            r_max: 6,
            termination: TerminationPolicy::LlmJudge,
            selection: SelectionStrategy::Majority,
            lambda: 0.0,
            samples_schedule: Vec::new(),
            temperature_schedule: Vec::new(),
            code_limit: Duration::from_secs(60),
            parallelism: 8,
            context_cap: 64 * 1024,
            seed: 0,
            pool_schedule: None,
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.r_min < 1 || self.r_min > self.r_max {
            return Err(OrchestratorError::InvalidConfig(format!(
                "need 1 <= r_min <= r_max, got r_min={} r_max={}",
                self.r_min, self.r_max
            )));
        }
        if self.parallelism == 0 {
            return Err(OrchestratorError::InvalidConfig("parallelism must be >= 1".into()));
        }
        if let Some(schedule) = &self.pool_schedule {
            if schedule.is_empty() {
                return Err(OrchestratorError::InvalidConfig("pool_schedule must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn samples_multiplier(&self, round: u32) -> u32 {
        *self.samples_schedule.get((round - 1) as usize).unwrap_or(&1)
    }

    pub fn pool_for_round(&self, round: u32) -> &AgentPool {
        match &self.pool_schedule {
            Some(schedule) => &schedule[((round - 1) as usize) % schedule.len()],
            None => &self.pool,
        }
    }
}

/// Observable per-round consensus signals. All fields are undefined
/// (None) when the round has no non-empty answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationSignals {
    /// (top count - runner-up count) / non-empty votes.
    pub vote_margin: Option<f64>,
    /// Shannon entropy of the answer distribution, in bits.
    pub answer_entropy: Option<f64>,
    /// top count / non-empty votes.
    pub agreement_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationDecision {
    pub stop: bool,
    pub reason: String,
}

/// Inference and token usage attributable to a single round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundCost {
    pub agent_inferences: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub tool_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    /// Pool order, expanded by the round's samples multiplier.
    pub answers: Vec<AgentAnswer>,
    pub termination_decision: TerminationDecision,
    pub signals: TerminationSignals,
    pub cost: RoundCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub question_id: String,
    pub rounds: Vec<RoundRecord>,
    /// Selection applied to the last round; None when every agent
    /// answer was empty (flagged rather than invented).
    pub final_answer: Option<CanonicalAnswer>,
    pub ledger: CostLedger,
    pub stop_round: u32,
}

/// A transcript plus the full traces behind it. Only the transcript is
/// persisted; traces exist for tests and debugging.
#[derive(Debug)]
pub struct QuestionRun {
    pub transcript: Transcript,
    pub traces: Vec<AgentTrace>,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("every agent failed in round {round}; first error: {first_error}")]
    AllAgentsFailed { round: u32, first_error: String },
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// Majority vote: mode of the non-empty canonical answers, ties broken
/// by the lowest index among tied values. Returns None when every
/// answer is empty.
pub fn majority_answer(answers: &[AgentAnswer]) -> Option<CanonicalAnswer> {
    let mut counts: Vec<(&CanonicalAnswer, usize, usize)> = Vec::new();
    for (index, answer) in answers.iter().enumerate() {
        let Some(canonical) = &answer.answer else { continue };
        match counts.iter_mut().find(|(value, _, _)| value.value == canonical.value) {
            Some((_, count, _)) => *count += 1,
            None => counts.push((canonical, 1, index)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(value, _, _)| value.clone())
}

/// Consensus signals over one round's answers.
pub fn compute_signals(answers: &[AgentAnswer]) -> TerminationSignals {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut votes = 0usize;
    for answer in answers {
        if let Some(canonical) = &answer.answer {
            *counts.entry(canonical.value.as_str()).or_insert(0) += 1;
            votes += 1;
        }
    }
    if votes == 0 {
        return TerminationSignals { vote_margin: None, answer_entropy: None, agreement_rate: None };
    }
    let mut sorted: Vec<usize> = counts.values().copied().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let top = sorted[0];
    let runner_up = sorted.get(1).copied().unwrap_or(0);
    let entropy: f64 = sorted
        .iter()
        .map(|&c| {
            let p = c as f64 / votes as f64;
            -p * p.log2()
        })
        .sum();
    TerminationSignals {
        vote_margin: Some((top - runner_up) as f64 / votes as f64),
        answer_entropy: Some(entropy),
        agreement_rate: Some(top as f64 / votes as f64),
    }
}

fn is_yes(text: &str) -> bool {
    extract_answer_span(text).map(|s| s.trim().eq_ignore_ascii_case("yes")).unwrap_or(false)
}

/// Decides whether refinement stops after round `r`. Stop outcomes are
/// only possible at `r >= r_min`.
pub fn decide_termination(
    policy: TerminationPolicy,
    question: &Question,
    rounds: &[RoundRecord],
    r: u32,
    r_min: u32,
    r_max: u32,
    backend: &dyn ModelBackend,
    ledger: &mut CostLedger,
) -> TerminationDecision {
    if r < r_min {
        return TerminationDecision { stop: false, reason: format!("below minimum round {r_min}") };
    }
    match policy {
        TerminationPolicy::Fixed => {
            if r >= r_max {
                TerminationDecision { stop: true, reason: format!("fixed round limit {r_max} reached") }
            } else {
                TerminationDecision { stop: false, reason: "fixed policy runs to the round limit".into() }
            }
        }
        TerminationPolicy::RuleStabilization => {
            let current = rounds.last().and_then(|rec| majority_answer(&rec.answers));
            let previous = rounds
                .len()
                .checked_sub(2)
                .and_then(|i| rounds.get(i))
                .and_then(|rec| majority_answer(&rec.answers));
            match (current, previous) {
                (Some(c), Some(p)) if c.value == p.value => TerminationDecision {
                    stop: true,
                    reason: format!("majority answer {:?} stable across rounds {} and {}", c.value, r - 1, r),
                },
                _ => TerminationDecision { stop: false, reason: "majority not yet stable".into() },
            }
        }
        TerminationPolicy::LlmJudge => {
            let answers = &rounds.last().expect("round just recorded").answers;
            let prompt = build_judge_prompt(question, r, answers);
            let request = GenerationRequest::new(prompt, "judge", r, Purpose::Judge);
            match backend.generate(&request) {
                Ok(response) => {
                    ledger.record_generation(Purpose::Judge, response.tokens_in, response.tokens_out);
                    if is_yes(&response.text) {
                        TerminationDecision { stop: true, reason: "judge declared consensus".into() }
                    } else if extract_answer_span(&response.text).is_some() {
                        TerminationDecision { stop: false, reason: "judge requested another round".into() }
                    } else {
                        log::warn!("judge response carried no answer span; continuing");
                        TerminationDecision {
                            stop: false,
                            reason: "judge response had no answer span; continuing conservatively".into(),
                        }
                    }
                }
                Err(e) => {
                    log::warn!("judge call failed ({e}); continuing");
                    TerminationDecision { stop: false, reason: format!("judge call failed: {e}") }
                }
            }
        }
    }
}

/// Selects the final answer from the last round's answers. Empty
/// answers never vote and are never chosen; an all-empty round yields
/// None.
pub fn select_final(
    strategy: SelectionStrategy,
    question: &Question,
    answers: &[AgentAnswer],
    stop_round: u32,
    seed: u64,
    backend: &dyn ModelBackend,
    ledger: &mut CostLedger,
) -> Option<CanonicalAnswer> {
    match strategy {
        SelectionStrategy::Majority => majority_answer(answers),
        SelectionStrategy::Random => {
            let non_empty: Vec<&CanonicalAnswer> =
                answers.iter().filter_map(|a| a.answer.as_ref()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            non_empty.choose(&mut rng).map(|a| (*a).clone())
        }
        SelectionStrategy::LlmSelector => {
            let prompt = build_selector_prompt(question, answers);
            let request = GenerationRequest::new(prompt, "selector", stop_round, Purpose::Selector);
            match backend.generate(&request) {
                Ok(response) => {
                    ledger.record_generation(Purpose::Selector, response.tokens_in, response.tokens_out);
                    match extract_answer_span(&response.text) {
                        Some(span) => Some(canonicalize(span, question.answer_kind)),
                        None => {
                            log::warn!("selector response carried no answer span; falling back to majority");
                            majority_answer(answers)
                        }
                    }
                }
                Err(e) => {
                    log::warn!("selector call failed ({e}); falling back to majority");
                    majority_answer(answers)
                }
            }
        }
    }
}

struct RoundTask<'a> {
    spec_index: usize,
    spec: &'a crate::agents::AgentSpec,
    prompt: String,
    samples: u32,
}

/// Runs all (agent, sample) calls for one round. Tasks are pulled from a
/// shared queue by up to `parallelism` workers; samples of the same
/// agent run sequentially inside one task so scripted ordinals stay
/// deterministic under concurrency.
fn run_round(
    tasks: Vec<RoundTask<'_>>,
    round: u32,
    config: &RunConfig,
    backend: &dyn ModelBackend,
    tools: &dyn ToolSuite,
) -> Vec<Vec<AgentTrace>> {
    let total = tasks.len();
    let queue = Mutex::new(tasks.into_iter().collect::<std::collections::VecDeque<_>>());
    let results: Mutex<Vec<Option<Vec<AgentTrace>>>> = Mutex::new((0..total).map(|_| None).collect());
    let workers = config.parallelism.min(total.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task = match queue.lock().unwrap().pop_front() {
                    Some(t) => t,
                    None => break,
                };
                let mut traces = Vec::with_capacity(task.samples as usize);
                for sample in 0..task.samples {
                    let mut options = RuntimeOptions {
                        context_cap: config.context_cap,
                        ..RuntimeOptions::default()
                    };
                    if task.samples > 1 && !config.temperature_schedule.is_empty() {
                        let schedule = &config.temperature_schedule;
                        options.temperature_override =
                            Some(schedule[(sample as usize) % schedule.len()]);
                    }
                    traces.push(agent_call(
                        task.spec, round, sample, &task.prompt, backend, tools, &options,
                    ));
                }
                results.lock().unwrap()[task.spec_index] = Some(traces);
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every task completed"))
        .collect()
}

/// Runs the full round loop for one question and returns the transcript
/// with a complete cost ledger.
pub fn run_question(
    question: &Question,
    config: &RunConfig,
    backend: &dyn ModelBackend,
    tools: &dyn ToolSuite,
) -> Result<QuestionRun, OrchestratorError> {
    config.validate()?;
    let mut ledger = CostLedger::default();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut all_traces: Vec<AgentTrace> = Vec::new();

    for r in 1..=config.r_max {
        let pool = config.pool_for_round(r);
        let multiplier = config.samples_multiplier(r);
        let prior: &[AgentAnswer] = match rounds.last() {
            Some(record) => &record.answers,
            None => &[],
        };

        let mut tasks = Vec::with_capacity(pool.len());
        for (spec_index, spec) in pool.specs.iter().enumerate() {
            let prompt = build_round_prompt(spec, question, prior)?;
            tasks.push(RoundTask {
                spec_index,
                spec,
                prompt,
                samples: spec.samples_per_round * multiplier,
            });
        }

        // Barrier: every trace for round r lands here before any
        // round-(r+1) prompt is built.
        let per_spec_traces = run_round(tasks, r, config, backend, tools);

        let mut answers = Vec::new();
        let mut cost = RoundCost::default();
        let mut failures = 0usize;
        let mut first_error = None;
        let mut trace_count = 0usize;
        for traces in per_spec_traces {
            for trace in traces {
                trace_count += 1;
                if let Some(err) = &trace.error {
                    failures += 1;
                    if first_error.is_none() {
                        first_error = Some(err.clone());
                    }
                }
                let (tokens_in, tokens_out) = trace.tokens();
                let generations = trace.generation_count();
                for _ in 0..generations {
                    ledger.record_generation(Purpose::Agent, 0, 0);
                }
                ledger.input_tokens += tokens_in;
                ledger.output_tokens += tokens_out;
                ledger.record_tool_calls(trace.budget_used as u64);
                cost.agent_inferences += generations;
                cost.input_tokens += tokens_in;
                cost.output_tokens += tokens_out;
                cost.tool_calls += trace.budget_used as u64;

                let canonical = extract_answer_span(&trace.final_answer.raw_response)
                    .map(|span| canonicalize(span, question.answer_kind));
                answers.push(AgentAnswer {
                    agent_id: trace.agent_id.clone(),
                    round: r,
                    raw_response: trace.final_answer.raw_response.clone(),
                    answer: canonical,
                    trace_ref: trace.final_answer.trace_ref.clone(),
                });
                all_traces.push(trace);
            }
        }
        if failures == trace_count {
            return Err(OrchestratorError::AllAgentsFailed {
                round: r,
                first_error: first_error.unwrap_or_else(|| "no traces produced".into()),
            });
        }

        let signals = compute_signals(&answers);
        rounds.push(RoundRecord {
            round: r,
            answers,
            termination_decision: TerminationDecision { stop: false, reason: String::new() },
            signals,
            cost,
        });

        let decision = decide_termination(
            config.termination,
            question,
            &rounds,
            r,
            config.r_min,
            config.r_max,
            backend,
            &mut ledger,
        );
        let stop = decision.stop;
        rounds.last_mut().unwrap().termination_decision = decision;
        if stop {
            break;
        }
    }

    let stop_round = rounds.len() as u32;
    let last_answers = &rounds.last().expect("at least one round ran").answers;
    let final_answer = select_final(
        config.selection,
        question,
        last_answers,
        stop_round,
        config.seed,
        backend,
        &mut ledger,
    );

    Ok(QuestionRun {
        transcript: Transcript {
            question_id: question.id.clone(),
            rounds,
            final_answer,
            ledger,
            stop_round,
        },
        traces: all_traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentPool, AgentSpec};
    use crate::backend::ScriptedBackend;
    use crate::core::{AnswerKind, ToolPermissions};
    use crate::tools::ScriptedToolSuite;

    fn text_pool(ids: &[&str]) -> AgentPool {
        AgentPool::new(
            ids.iter()
                .map(|id| AgentSpec::new(id, id, "", ToolPermissions::none()))
                .collect(),
        )
        .unwrap()
    }

    fn question() -> Question {
        Question::new("q1", "What is 6*7?", AnswerKind::FreeForm)
    }

    fn answer_of(agent: &str, round: u32, value: Option<&str>) -> AgentAnswer {
        AgentAnswer {
            agent_id: agent.into(),
            round,
            raw_response: value.map(|v| format!("<<<{v}>>>")).unwrap_or_default(),
            answer: value.map(|v| canonicalize(v, AnswerKind::FreeForm)),
            trace_ref: format!("{agent}#r{round}s0"),
        }
    }

    #[test]
    fn majority_mode_and_tie_breaks() {
        let mk = |values: &[Option<&str>]| -> Vec<AgentAnswer> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| answer_of(&format!("a{i}"), 1, *v))
                .collect()
        };
        assert_eq!(majority_answer(&mk(&[Some("A"), Some("A"), Some("B")])).unwrap().value, "A");
        assert_eq!(majority_answer(&mk(&[Some("A"), Some("B")])).unwrap().value, "A");
        assert_eq!(majority_answer(&mk(&[Some("A"), Some("B"), Some("C")])).unwrap().value, "A");
        assert_eq!(majority_answer(&mk(&[None, Some("B"), Some("B"), Some("A")])).unwrap().value, "B");
        assert_eq!(majority_answer(&mk(&[None, None])), None);
    }

    #[test]
    fn signals_counting() {
        let answers: Vec<AgentAnswer> = [Some("A"), Some("A"), Some("B")]
            .iter()
            .enumerate()
            .map(|(i, v)| answer_of(&format!("a{i}"), 1, *v))
            .collect();
        let signals = compute_signals(&answers);
        assert!((signals.vote_margin.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((signals.agreement_rate.unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let unanimous: Vec<AgentAnswer> =
            (0..3).map(|i| answer_of(&format!("a{i}"), 1, Some("A"))).collect();
        let s = compute_signals(&unanimous);
        assert_eq!(s.answer_entropy.unwrap(), 0.0);
        assert_eq!(s.vote_margin.unwrap(), 1.0);

        let split: Vec<AgentAnswer> =
            [Some("A"), Some("B")].iter().enumerate().map(|(i, v)| answer_of(&format!("a{i}"), 1, *v)).collect();
        assert!((compute_signals(&split).answer_entropy.unwrap() - 1.0).abs() < 1e-12);

        let empty: Vec<AgentAnswer> = vec![answer_of("a0", 1, None)];
        let undefined = compute_signals(&empty);
        assert!(undefined.vote_margin.is_none());
        assert!(undefined.answer_entropy.is_none());
        assert!(undefined.agreement_rate.is_none());
    }

    fn scripted_round_backend(pool: &AgentPool, values: &[&[&str]]) -> ScriptedBackend {
        let mut builder = ScriptedBackend::builder();
        for (round_index, round_values) in values.iter().enumerate() {
            for (spec, value) in pool.specs.iter().zip(round_values.iter()) {
                builder = builder.response(
                    &spec.agent_id,
                    (round_index + 1) as u32,
                    Purpose::Agent,
                    &format!("<<<{value}>>>"),
                );
            }
        }
        builder.build()
    }

    #[test]
    fn rule_stabilization_stops_on_stable_majority() {
        let pool = text_pool(&["a", "b", "c"]);
        let backend = scripted_round_backend(&pool, &[&["A", "A", "B"], &["A", "A", "A"]]);
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.termination = TerminationPolicy::RuleStabilization;
        config.r_max = 4;
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.stop_round, 2);
        assert_eq!(run.transcript.final_answer.unwrap().value, "A");
        assert_eq!(run.transcript.ledger.judge_inferences, 0);
    }

    #[test]
    fn rule_stabilization_needs_consecutive_equal_majorities() {
        let pool = text_pool(&["a", "b", "c"]);
        let backend = scripted_round_backend(
            &pool,
            &[&["A", "A", "B"], &["B", "B", "A"], &["B", "B", "B"], &["B", "B", "B"]],
        );
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.termination = TerminationPolicy::RuleStabilization;
        config.r_max = 4;
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.stop_round, 3);
    }

    #[test]
    fn judge_not_consulted_below_r_min() {
        let pool = text_pool(&["a", "b"]);
        let mut builder = ScriptedBackend::builder();
        for round in 1..=2 {
            for id in ["a", "b"] {
                builder = builder.response(id, round, Purpose::Agent, "<<<X>>>");
            }
        }
        // A round-1 judge entry exists but must never be consumed.
        builder = builder.response("judge", 1, Purpose::Judge, "<<<YES>>>");
        builder = builder.response("judge", 2, Purpose::Judge, "<<<YES>>>");
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.r_max = 6;
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.stop_round, 2);
        assert_eq!(run.transcript.ledger.judge_inferences, 1);
        let judge_rounds: Vec<u32> = backend
            .requests()
            .iter()
            .filter(|r| r.purpose == Purpose::Judge)
            .map(|r| r.round)
            .collect();
        assert_eq!(judge_rounds, vec![2]);
    }

    #[test]
    fn judge_no_answer_span_continues_conservatively() {
        let pool = text_pool(&["a"]);
        let mut builder = ScriptedBackend::builder();
        for round in 1..=3 {
            builder = builder.response("a", round, Purpose::Agent, "<<<X>>>");
        }
        builder = builder.response("judge", 2, Purpose::Judge, "I cannot decide");
        builder = builder.response("judge", 3, Purpose::Judge, "fine <<<YES>>>");
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.r_max = 6;
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.stop_round, 3);
        assert!(run.transcript.rounds[1]
            .termination_decision
            .reason
            .contains("no answer span"));
    }

    #[test]
    fn random_selection_is_seeded_and_skips_empty() {
        let answers = vec![
            answer_of("a", 1, None),
            answer_of("b", 1, Some("B")),
            answer_of("c", 1, Some("C")),
        ];
        let backend = ScriptedBackend::builder().build();
        let q = question();
        let mut ledger = CostLedger::default();
        let first = select_final(SelectionStrategy::Random, &q, &answers, 1, 42, &backend, &mut ledger);
        let second = select_final(SelectionStrategy::Random, &q, &answers, 1, 42, &backend, &mut ledger);
        assert_eq!(first, second);
        assert!(["B", "C"].contains(&first.unwrap().value.as_str()));
        assert_eq!(ledger.selector_inferences, 0);
    }

    #[test]
    fn llm_selector_uses_refinement_prompt_and_ledger() {
        let pool = text_pool(&["a", "b"]);
        let mut builder = ScriptedBackend::builder();
        for id in ["a", "b"] {
            builder = builder.response(id, 1, Purpose::Agent, "<<<X>>>");
            builder = builder.response(id, 2, Purpose::Agent, "<<<X>>>");
        }
        builder = builder.response("judge", 2, Purpose::Judge, "<<<YES>>>");
        builder = builder.with_tokens("selector", 2, Purpose::Selector, "<<<X>>>", 40, 2);
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.selection = SelectionStrategy::LlmSelector;
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.ledger.selector_inferences, 1);
        assert_eq!(run.transcript.final_answer.unwrap().value, "X");
        let selector_requests: Vec<_> = backend
            .requests()
            .into_iter()
            .filter(|r| r.purpose == Purpose::Selector)
            .collect();
        assert_eq!(selector_requests.len(), 1);
        assert!(selector_requests[0].context.contains("Candidate answers from several methods"));
    }

    #[test]
    fn one_failed_agent_does_not_abort_round() {
        let pool = text_pool(&["a", "b"]);
        // No fixture for agent b: it fails; the round proceeds on a.
        let mut builder = ScriptedBackend::builder();
        for round in 1..=2 {
            builder = builder.response("a", round, Purpose::Agent, "<<<X>>>");
        }
        builder = builder.response("judge", 2, Purpose::Judge, "<<<YES>>>");
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let config = RunConfig::new(pool);
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.stop_round, 2);
        assert_eq!(run.transcript.final_answer.unwrap().value, "X");
        assert!(run.traces.iter().any(|t| t.failed()));
    }

    #[test]
    fn all_agents_failed_aborts_with_diagnostic() {
        let pool = text_pool(&["a", "b"]);
        let backend = ScriptedBackend::builder().build();
        let tools = ScriptedToolSuite::empty();
        let config = RunConfig::new(pool);
        let err = run_question(&question(), &config, &backend, &tools).unwrap_err();
        assert!(matches!(err, OrchestratorError::AllAgentsFailed { round: 1, .. }));
    }

    #[test]
    fn barrier_isolation_no_round_answer_in_its_own_prompts() {
        let pool = text_pool(&["a", "b", "c"]);
        // Unique marker per (agent, round).
        let mut builder = ScriptedBackend::builder();
        for round in 1..=3u32 {
            for id in ["a", "b", "c"] {
                builder =
                    builder.response(id, round, Purpose::Agent, &format!("<<<marker-{id}-{round}>>>"));
            }
            builder = builder.response(
                "judge",
                round,
                Purpose::Judge,
                if round < 3 { "<<<NO>>>" } else { "<<<YES>>>" },
            );
        }
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.r_max = 3;
        run_question(&question(), &config, &backend, &tools).unwrap();
        for request in backend.requests() {
            if request.purpose != Purpose::Agent {
                continue;
            }
            for id in ["a", "b", "c"] {
                assert!(
                    !request.context.contains(&format!("marker-{id}-{}", request.round)),
                    "round {} prompt leaked its own round's answer",
                    request.round
                );
            }
        }
    }

    #[test]
    fn samples_schedule_expands_answers_and_ledger() {
        let pool = text_pool(&["a", "b"]);
        let mut builder = ScriptedBackend::builder();
        for id in ["a", "b"] {
            for _ in 0..3 {
                builder = builder.response(id, 1, Purpose::Agent, "<<<X>>>");
            }
            builder = builder.response(id, 2, Purpose::Agent, "<<<X>>>");
        }
        builder = builder.response("judge", 2, Purpose::Judge, "<<<YES>>>");
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool);
        config.samples_schedule = vec![3];
        config.temperature_schedule = vec![0.25, 0.75, 1.25];
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.rounds[0].answers.len(), 6);
        assert_eq!(run.transcript.rounds[1].answers.len(), 2);
        assert_eq!(run.transcript.ledger.agent_inferences, 8);
        let temps: Vec<f64> = backend
            .requests()
            .iter()
            .filter(|r| r.purpose == Purpose::Agent && r.round == 1 && r.agent_id == "a")
            .map(|r| r.temperature)
            .collect();
        assert_eq!(temps, vec![0.25, 0.75, 1.25]);
    }

    #[test]
    fn pool_schedule_swaps_pool_per_round() {
        let pool_one = text_pool(&["a"]);
        let pool_two = text_pool(&["z"]);
        let mut builder = ScriptedBackend::builder();
        builder = builder.response("a", 1, Purpose::Agent, "<<<X>>>");
        builder = builder.response("z", 2, Purpose::Agent, "<<<X>>>");
        builder = builder.response("judge", 2, Purpose::Judge, "<<<YES>>>");
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let mut config = RunConfig::new(pool_one.clone());
        config.pool_schedule = Some(vec![pool_one, pool_two]);
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        assert_eq!(run.transcript.rounds[0].answers[0].agent_id, "a");
        assert_eq!(run.transcript.rounds[1].answers[0].agent_id, "z");
    }

    #[test]
    fn ledger_matches_trace_replay() {
        let pool = text_pool(&["a", "b", "c"]);
        let mut builder = ScriptedBackend::builder();
        for round in 1..=2u32 {
            for id in ["a", "b", "c"] {
                builder = builder.with_tokens(id, round, Purpose::Agent, "<<<X>>>", 17, 5);
            }
        }
        builder = builder.with_tokens("judge", 2, Purpose::Judge, "<<<YES>>>", 100, 7);
        let backend = builder.build();
        let tools = ScriptedToolSuite::empty();
        let config = RunConfig::new(pool);
        let run = run_question(&question(), &config, &backend, &tools).unwrap();
        let ledger = &run.transcript.ledger;

        let mut replayed = CostLedger::default();
        for trace in &run.traces {
            let (tin, tout) = trace.tokens();
            for _ in 0..trace.generation_count() {
                replayed.record_generation(Purpose::Agent, 0, 0);
            }
            replayed.input_tokens += tin;
            replayed.output_tokens += tout;
            replayed.record_tool_calls(trace.budget_used as u64);
        }
        replayed.record_generation(Purpose::Judge, 100, 7);
        assert_eq!(ledger, &replayed);
        assert_eq!(ledger.agent_inferences, 6);
        assert_eq!(ledger.judge_inferences, 1);
        assert_eq!(ledger.input_tokens, 6 * 17 + 100);
        assert_eq!(ledger.output_tokens, 6 * 5 + 7);
    }

    #[test]
    fn stop_round_respects_bounds_over_random_scripts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let pool = text_pool(&["a", "b"]);
            let r_max = rng.gen_range(2..5);
            let policy = match rng.gen_range(0..3) {
                0 => TerminationPolicy::LlmJudge,
                1 => TerminationPolicy::RuleStabilization,
                _ => TerminationPolicy::Fixed,
            };
            let mut builder = ScriptedBackend::builder();
            for round in 1..=r_max {
                for id in ["a", "b"] {
                    let value = if rng.gen_bool(0.5) { "A" } else { "B" };
                    builder = builder.response(id, round, Purpose::Agent, &format!("<<<{value}>>>"));
                }
                let verdict = if rng.gen_bool(0.4) { "<<<YES>>>" } else { "<<<NO>>>" };
                builder = builder.response("judge", round, Purpose::Judge, verdict);
            }
            let backend = builder.build();
            let tools = ScriptedToolSuite::empty();
            let mut config = RunConfig::new(pool);
            config.termination = policy;
            config.r_max = r_max;
            let run = run_question(&question(), &config, &backend, &tools).unwrap();
            assert!(run.transcript.stop_round >= config.r_min.min(r_max));
            assert!(run.transcript.stop_round <= r_max);
            if policy == TerminationPolicy::Fixed {
                assert_eq!(run.transcript.stop_round, r_max);
            }
        }
    }
}
