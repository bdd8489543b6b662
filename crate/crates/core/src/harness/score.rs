//! Scoring: exact canonical-match comparison of transcripts against
//! ground truth, building the correctness matrix that feeds every
//! metric.
//!
//! Two escape hatches mirror the evaluation protocol: an answer whose
//! raw response carries a code block but no answer span is executed
//! under the code limit and its stdout compared (code that exceeds the
//! limit marks the entry failed), and an optional judge backend
//! adjudicates pairs the exact rules call mismatched. Every judge
//! adjudication is persisted for audit.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{GenerationRequest, ModelBackend};
use crate::core::{
    canonicalize, extract_answer_span, extract_code_block, AnswerKind, CanonicalAnswer, Purpose,
    Question,
};
use crate::metrics::CorrectnessMatrix;
use crate::orchestrator::Transcript;
use crate::tools::{CodeSandbox, ExecStatus};

/// Equivalence-judge prompt. The published scoring criteria are not
/// specified beyond "the model judges"; adjudications are persisted so
/// users can audit rather than trust.
const SCORE_JUDGE_TEMPLATE: &str = "Task: Decide whether the candidate answer is equivalent to the ground-truth answer for the question below. Formatting differences do not matter; the meaning must match exactly.

Question:
{question}

Ground truth:
{truth}

Candidate answer:
{candidate}

Output your reasoning first, then conclude clearly with <<<YES>>> if the candidate is equivalent to the ground truth, or <<<NO>>> if it is not.";

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("result question id {0:?} does not appear in the dataset")]
    UnknownQuestion(String),
    #[error("no transcripts to score")]
    Empty,
}

/// One persisted judge adjudication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub question_id: String,
    pub subject: String,
    pub candidate: String,
    pub truth: String,
    pub judge_response: String,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub matrix: CorrectnessMatrix,
    /// Final-answer accuracy over scored questions.
    pub accuracy: f64,
    pub scored: usize,
    pub correct: usize,
    /// Question ids excluded for missing ground truth.
    pub excluded: Vec<String>,
    pub adjudications: Vec<Adjudication>,
}

pub struct Scorer<'a> {
    pub judge: Option<&'a dyn ModelBackend>,
    pub code_limit: Duration,
    sandbox: CodeSandbox,
}

impl<'a> Scorer<'a> {
    pub fn new(judge: Option<&'a dyn ModelBackend>, code_limit: Duration) -> Self {
        Self { judge, code_limit, sandbox: CodeSandbox::default() }
    }

    /// Resolves an agent answer to a comparable canonical value,
    /// executing a final code block when no answer span is present.
    fn resolve_answer(&self, raw: &str, kind: AnswerKind) -> Option<CanonicalAnswer> {
        if let Some(span) = extract_answer_span(raw) {
            return Some(canonicalize(span, kind));
        }
        let source = extract_code_block(raw)?;
        let result = self.sandbox.execute(source, self.code_limit);
        match result.status {
            ExecStatus::Ok => Some(canonicalize(result.stdout.trim(), kind)),
            // Exceeding the limit (or erroring) in the final round marks
            // the entry failed.
            _ => None,
        }
    }

    fn judge_equivalent(
        &self,
        question: &Question,
        candidate: &str,
        truth: &str,
        subject: &str,
        adjudications: &mut Vec<Adjudication>,
    ) -> bool {
        let Some(judge) = self.judge else { return false };
        let prompt = SCORE_JUDGE_TEMPLATE
            .replace("{question}", &question.body)
            .replace("{truth}", truth)
            .replace("{candidate}", candidate);
        let request = GenerationRequest::new(prompt, "score-judge", 0, Purpose::Judge);
        match judge.generate(&request) {
            Ok(response) => {
                let equivalent = extract_answer_span(&response.text)
                    .map(|s| s.trim().eq_ignore_ascii_case("yes"))
                    .unwrap_or(false);
                adjudications.push(Adjudication {
                    question_id: question.id.clone(),
                    subject: subject.to_string(),
                    candidate: candidate.to_string(),
                    truth: truth.to_string(),
                    judge_response: response.text,
                    equivalent,
                });
                equivalent
            }
            Err(e) => {
                log::warn!("score judge failed ({e}); keeping exact-match verdict");
                false
            }
        }
    }

    fn compare(
        &self,
        question: &Question,
        answer: Option<&CanonicalAnswer>,
        truth: &CanonicalAnswer,
        raw: &str,
        subject: &str,
        adjudications: &mut Vec<Adjudication>,
    ) -> bool {
        match answer {
            Some(a) if a.value == truth.value => true,
            Some(a) => self.judge_equivalent(question, &a.value, &truth.value, subject, adjudications),
            None if !raw.is_empty() && self.judge.is_some() => {
                self.judge_equivalent(question, raw, &truth.value, subject, adjudications)
            }
            None => false,
        }
    }

    /// Scores transcripts against the dataset. The matrix covers every
    /// agent id seen in any round; matrix entries for rounds a question
    /// never reached stay flagged missing.
    pub fn score(
        &self,
        transcripts: &[Transcript],
        questions: &[Question],
    ) -> Result<ScoreReport, ScoreError> {
        if transcripts.is_empty() {
            return Err(ScoreError::Empty);
        }
        let by_id: HashMap<&str, &Question> =
            questions.iter().map(|q| (q.id.as_str(), q)).collect();
        for transcript in transcripts {
            if !by_id.contains_key(transcript.question_id.as_str()) {
                return Err(ScoreError::UnknownQuestion(transcript.question_id.clone()));
            }
        }

        let mut excluded = Vec::new();
        let scorable: Vec<&Transcript> = transcripts
            .iter()
            .filter(|t| {
                let has_truth = by_id[t.question_id.as_str()].ground_truth.is_some();
                if !has_truth {
                    excluded.push(t.question_id.clone());
                }
                has_truth
            })
            .collect();
        if scorable.is_empty() {
            return Err(ScoreError::Empty);
        }

        // Agent order: first appearance across transcripts (pool order
        // within a round is preserved by construction).
        let mut agent_ids: Vec<String> = Vec::new();
        let mut max_round = 0u32;
        for transcript in &scorable {
            for round in &transcript.rounds {
                max_round = max_round.max(round.round);
                for answer in &round.answers {
                    if !agent_ids.contains(&answer.agent_id) {
                        agent_ids.push(answer.agent_id.clone());
                    }
                }
            }
        }

        let question_ids: Vec<String> =
            scorable.iter().map(|t| t.question_id.clone()).collect();
        let round_labels: Vec<u32> = (1..=max_round).collect();
        let mut matrix = CorrectnessMatrix::new(question_ids, agent_ids.clone(), round_labels);
        let mut adjudications = Vec::new();
        let mut correct_finals = 0usize;

        for (q_index, transcript) in scorable.iter().enumerate() {
            let question = by_id[transcript.question_id.as_str()];
            let truth = canonicalize(
                question.ground_truth.as_deref().expect("filtered to scorable"),
                question.answer_kind,
            );

            for round in &transcript.rounds {
                // Any-sample-correct per agent per round.
                let mut per_agent: HashMap<&str, bool> = HashMap::new();
                for answer in &round.answers {
                    let resolved = self.resolve_answer(&answer.raw_response, question.answer_kind);
                    let is_correct = self.compare(
                        question,
                        resolved.as_ref(),
                        &truth,
                        &answer.raw_response,
                        &format!("{}@r{}", answer.agent_id, round.round),
                        &mut adjudications,
                    );
                    let entry = per_agent.entry(answer.agent_id.as_str()).or_insert(false);
                    *entry = *entry || is_correct;
                }
                for (agent_id, is_correct) in per_agent {
                    let a_index = matrix.agent_index(agent_id).expect("agent collected above");
                    matrix.set(q_index, a_index, (round.round - 1) as usize, is_correct);
                }
            }

            let final_ok = match &transcript.final_answer {
                Some(answer) => self.compare(
                    question,
                    Some(answer),
                    &truth,
                    "",
                    "final",
                    &mut adjudications,
                ),
                None => false,
            };
            if final_ok {
                correct_finals += 1;
            }
        }

        let scored = scorable.len();
        Ok(ScoreReport {
            matrix,
            accuracy: correct_finals as f64 / scored as f64,
            scored,
            correct: correct_finals,
            excluded,
            adjudications,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::core::{AgentAnswer, CostLedger};
    use crate::orchestrator::{RoundCost, RoundRecord, TerminationDecision, TerminationSignals};

    fn answer(agent: &str, round: u32, raw: &str, kind: AnswerKind) -> AgentAnswer {
        AgentAnswer {
            agent_id: agent.into(),
            round,
            raw_response: raw.into(),
            answer: extract_answer_span(raw).map(|s| canonicalize(s, kind)),
            trace_ref: format!("{agent}#r{round}s0"),
        }
    }

    fn transcript(question_id: &str, rounds: Vec<Vec<AgentAnswer>>, final_value: Option<&str>) -> Transcript {
        let stop_round = rounds.len() as u32;
        Transcript {
            question_id: question_id.into(),
            rounds: rounds
                .into_iter()
                .enumerate()
                .map(|(i, answers)| RoundRecord {
                    round: (i + 1) as u32,
                    answers,
                    termination_decision: TerminationDecision { stop: false, reason: String::new() },
                    signals: TerminationSignals {
                        vote_margin: None,
                        answer_entropy: None,
                        agreement_rate: None,
                    },
                    cost: RoundCost::default(),
                })
                .collect(),
            final_answer: final_value.map(|v| canonicalize(v, AnswerKind::Numeric)),
            ledger: CostLedger::default(),
            stop_round,
        }
    }

    #[test]
    fn exact_match_scoring() {
        let questions = vec![Question::new("q1", "2+2?", AnswerKind::Numeric).with_truth("4")];
        let t = transcript(
            "q1",
            vec![vec![
                answer("a", 1, "<<<4>>>", AnswerKind::Numeric),
                answer("b", 1, "<<<5>>>", AnswerKind::Numeric),
            ]],
            Some("4"),
        );
        let scorer = Scorer::new(None, Duration::from_secs(5));
        let report = scorer.score(&[t], &questions).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert!(report.matrix.is_correct(0, 0, 0));
        assert!(!report.matrix.is_correct(0, 1, 0));
        assert!(report.adjudications.is_empty());
    }

    #[test]
    fn final_code_block_is_executed_for_comparison() {
        let questions = vec![Question::new("q1", "6*7?", AnswerKind::Numeric).with_truth("42")];
        let code_answer = "plan, then:\n```python\nprint(6*7)\n```";
        let t = transcript("q1", vec![vec![answer("cot_code", 1, code_answer, AnswerKind::Numeric)]], None);
        let scorer = Scorer::new(None, Duration::from_secs(10));
        let report = scorer.score(&[t], &questions).unwrap();
        assert!(report.matrix.is_correct(0, 0, 0));
    }

    #[test]
    fn code_exceeding_limit_is_marked_failure() {
        let questions = vec![Question::new("q1", "6*7?", AnswerKind::Numeric).with_truth("42")];
        let code_answer = "```python\nwhile True: pass\n```";
        let t = transcript("q1", vec![vec![answer("cot_code", 1, code_answer, AnswerKind::Numeric)]], None);
        let scorer = Scorer::new(None, Duration::from_secs(1));
        let report = scorer.score(&[t], &questions).unwrap();
        assert!(!report.matrix.is_correct(0, 0, 0));
        assert!(!report.matrix.is_missing(0, 0, 0));
    }

    #[test]
    fn judge_adjudicates_mismatch_and_persists() {
        let questions =
            vec![Question::new("q1", "capital of France?", AnswerKind::FreeForm).with_truth("Paris")];
        let t = transcript(
            "q1",
            vec![vec![answer("a", 1, "<<<The city of Paris>>>", AnswerKind::FreeForm)]],
            None,
        );
        let judge = ScriptedBackend::builder()
            .response("score-judge", 0, Purpose::Judge, "same city <<<YES>>>")
            .build();
        let scorer = Scorer::new(Some(&judge), Duration::from_secs(5));
        let report = scorer.score(&[t], &questions).unwrap();
        assert!(report.matrix.is_correct(0, 0, 0));
        assert_eq!(report.adjudications.len(), 1);
        assert!(report.adjudications[0].equivalent);
        assert_eq!(report.adjudications[0].candidate, "The city of Paris");
    }

    #[test]
    fn missing_truth_excluded_and_listed() {
        let questions = vec![
            Question::new("q1", "x", AnswerKind::FreeForm).with_truth("A"),
            Question::new("q2", "y", AnswerKind::FreeForm),
        ];
        let t1 = transcript("q1", vec![vec![answer("a", 1, "<<<A>>>", AnswerKind::FreeForm)]], Some("A"));
        let t2 = transcript("q2", vec![vec![answer("a", 1, "<<<B>>>", AnswerKind::FreeForm)]], Some("B"));
        let scorer = Scorer::new(None, Duration::from_secs(5));
        let report = scorer.score(&[t1, t2], &questions).unwrap();
        assert_eq!(report.scored, 1);
        assert_eq!(report.excluded, vec!["q2".to_string()]);
    }

    #[test]
    fn unknown_result_id_is_error() {
        let questions = vec![Question::new("q1", "x", AnswerKind::FreeForm).with_truth("A")];
        let t = transcript("q9", vec![vec![answer("a", 1, "<<<A>>>", AnswerKind::FreeForm)]], None);
        let scorer = Scorer::new(None, Duration::from_secs(5));
        assert!(matches!(
            scorer.score(&[t], &questions),
            Err(ScoreError::UnknownQuestion(_))
        ));
    }

    #[test]
    fn rounds_not_reached_stay_missing() {
        let questions = vec![Question::new("q1", "x", AnswerKind::FreeForm).with_truth("A")];
        let t1 = transcript(
            "q1",
            vec![
                vec![answer("a", 1, "<<<A>>>", AnswerKind::FreeForm)],
                vec![answer("a", 2, "<<<A>>>", AnswerKind::FreeForm)],
            ],
            Some("A"),
        );
        let scorer = Scorer::new(None, Duration::from_secs(5));
        let report = scorer.score(&[t1], &questions).unwrap();
        assert!(!report.matrix.is_missing(0, 0, 0));
        assert!(!report.matrix.is_missing(0, 0, 1));
        assert_eq!(report.matrix.rounds(), 2);
    }
}
