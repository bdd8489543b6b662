//! Batch execution over a dataset: concurrent questions, crash-safe
//! append-only results, resume by question id, and repeated runs with
//! distinct seeds.
//!
//! The results file is newline-delimited JSON. Every record carries a
//! schema version `v` and a `type` tag:
//! - `transcript`: `{v, type, run, seed, transcript}` — one per question
//! - `error`: `{v, type, run, question_id, error}` — a failed question
//! - `summary`: `{v, type, run, seed, questions, answered, scored, correct, accuracy, ledger, objective}`
//! - `summary_mean`: `{v, type, runs, mean_accuracy}`
//!
//! Transcripts are written in dataset order so a scripted run with a
//! fixed seed produces a byte-identical file; each record is flushed as
//! written, and a resumed batch re-runs only the missing ids.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::AgentPool;
use crate::backend::ModelBackend;
use crate::core::{canonicalize, CostLedger, Question};
use crate::metrics::{objective_report, CostUnit};
use crate::orchestrator::{run_question, OrchestratorError, RunConfig, Transcript};
use crate::tools::ToolSuite;

pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultRecord {
    Transcript {
        v: u32,
        run: u32,
        seed: u64,
        transcript: Transcript,
    },
    Error {
        v: u32,
        run: u32,
        question_id: String,
        error: String,
    },
    Summary {
        v: u32,
        run: u32,
        seed: u64,
        questions: usize,
        answered: usize,
        scored: usize,
        correct: usize,
        accuracy: f64,
        ledger: CostLedger,
        objective: f64,
    },
    SummaryMean {
        v: u32,
        runs: u32,
        mean_accuracy: f64,
    },
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("results io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("results serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("results file line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub seed: u64,
    /// Concurrent questions.
    pub parallelism: usize,
    /// Number of repeated runs with seeds seed, seed+1, ...
    pub repeat: u32,
    pub lambda: f64,
    pub cost_unit: CostUnit,
    /// Pools to sample per-round schedules from (evolveD); empty means
    /// the config pool is used as-is.
    pub evolved_choices: Vec<AgentPool>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            parallelism: 2,
            repeat: 1,
            lambda: 0.0,
            cost_unit: CostUnit::Inferences,
            evolved_choices: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: u32,
    pub seed: u64,
    pub questions: usize,
    pub answered: usize,
    pub scored: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ledger: CostLedger,
    pub objective: f64,
}

/// Stable per-question seed: mixes the batch seed with the question id
/// so schedules do not depend on execution order.
pub fn question_seed(batch_seed: u64, question_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(batch_seed.to_le_bytes());
    hasher.update(question_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

fn config_for_question(base: &RunConfig, question: &Question, options: &BatchOptions, seed: u64) -> RunConfig {
    let mut config = base.clone();
    config.seed = question_seed(seed, &question.id);
    if !options.evolved_choices.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let schedule: Vec<AgentPool> = (0..config.r_max)
            .map(|_| {
                options
                    .evolved_choices
                    .choose(&mut rng)
                    .expect("choices verified non-empty")
                    .clone()
            })
            .collect();
        config.pool_schedule = Some(schedule);
    }
    config
}

/// Exact canonical-match correctness of a transcript's final answer.
/// Returns None when the question has no ground truth.
pub fn final_answer_correct(transcript: &Transcript, question: &Question) -> Option<bool> {
    let truth = question.ground_truth.as_deref()?;
    let truth = canonicalize(truth, question.answer_kind);
    Some(match &transcript.final_answer {
        Some(answer) => answer.value == truth.value,
        None => false,
    })
}

/// Reads the (run, question_id) pairs already completed in an existing
/// results file, so an interrupted batch resumes where it stopped.
pub fn completed_ids(path: &Path) -> Result<HashSet<(u32, String)>, BatchError> {
    let mut done = HashSet::new();
    if !path.exists() {
        return Ok(done);
    }
    let text = std::fs::read_to_string(path)?;
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line from a crash is tolerated; anything else
        // malformed is an error worth surfacing.
        match serde_json::from_str::<ResultRecord>(line) {
            Ok(ResultRecord::Transcript { run, transcript, .. }) => {
                done.insert((run, transcript.question_id));
            }
            Ok(_) => {}
            Err(e) => {
                if index + 1 == text.lines().count() {
                    log::warn!("ignoring torn final results line: {e}");
                } else {
                    return Err(BatchError::Corrupt { line: index + 1, message: e.to_string() });
                }
            }
        }
    }
    Ok(done)
}

/// Loads all transcripts (with run tags) from a results file.
pub fn load_results(path: &Path) -> Result<Vec<(u32, Transcript)>, BatchError> {
    let text = std::fs::read_to_string(path)?;
    let mut transcripts = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ResultRecord = serde_json::from_str(line)
            .map_err(|e| BatchError::Corrupt { line: index + 1, message: e.to_string() })?;
        if let ResultRecord::Transcript { run, transcript, .. } = record {
            transcripts.push((run, transcript));
        }
    }
    Ok(transcripts)
}

enum QuestionOutcome {
    Done(Box<Transcript>),
    Failed(String),
}

fn run_one_pass<B: ModelBackend, T: ToolSuite>(
    questions: &[Question],
    config: &RunConfig,
    backend: &B,
    tools: &T,
    options: &BatchOptions,
    run: u32,
    seed: u64,
    done: &HashSet<(u32, String)>,
    writer: &mut dyn Write,
) -> Result<RunSummary, BatchError> {
    let pending: Vec<(usize, &Question)> = questions
        .iter()
        .enumerate()
        .filter(|(_, q)| !done.contains(&(run, q.id.clone())))
        .collect();

    let queue: Mutex<VecDeque<(usize, &Question)>> = Mutex::new(pending.iter().copied().collect());
    let outcomes: Mutex<BTreeMap<usize, QuestionOutcome>> = Mutex::new(BTreeMap::new());
    let workers = options.parallelism.max(1).min(pending.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let (index, question) = match queue.lock().unwrap().pop_front() {
                    Some(item) => item,
                    None => break,
                };
                let question_config = config_for_question(config, question, options, seed);
                let outcome = match run_question(question, &question_config, backend, tools) {
                    Ok(run_result) => QuestionOutcome::Done(Box::new(run_result.transcript)),
                    Err(e) => QuestionOutcome::Failed(e.to_string()),
                };
                outcomes.lock().unwrap().insert(index, outcome);
            });
        }
    });

    // Write in dataset order so identical runs produce identical bytes.
    let outcomes = outcomes.into_inner().unwrap();
    let mut ledger = CostLedger::default();
    let mut answered = 0usize;
    let mut scored = 0usize;
    let mut correct = 0usize;
    for (index, question) in &pending {
        let record = match outcomes.get(index) {
            Some(QuestionOutcome::Done(transcript)) => {
                ledger.merge(&transcript.ledger);
                if transcript.final_answer.is_some() {
                    answered += 1;
                }
                if let Some(is_correct) = final_answer_correct(transcript, question) {
                    scored += 1;
                    if is_correct {
                        correct += 1;
                    }
                }
                ResultRecord::Transcript {
                    v: RESULTS_VERSION,
                    run,
                    seed,
                    transcript: (**transcript).clone(),
                }
            }
            Some(QuestionOutcome::Failed(error)) => ResultRecord::Error {
                v: RESULTS_VERSION,
                run,
                question_id: question.id.clone(),
                error: error.clone(),
            },
            None => unreachable!("every pending question produced an outcome"),
        };
        let line = serde_json::to_string(&record)?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }

    let accuracy = if scored > 0 { correct as f64 / scored as f64 } else { 0.0 };
    let objective = objective_report(accuracy, &ledger, options.lambda, options.cost_unit);
    let summary = RunSummary {
        run,
        seed,
        questions: questions.len(),
        answered,
        scored,
        correct,
        accuracy,
        ledger: ledger.clone(),
        objective,
    };
    let record = ResultRecord::Summary {
        v: RESULTS_VERSION,
        run,
        seed,
        questions: summary.questions,
        answered,
        scored,
        correct,
        accuracy,
        ledger,
        objective,
    };
    let line = serde_json::to_string(&record)?;
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(summary)
}

/// Runs the batch, appending records to the results file as questions
/// complete. With `repeat > 1`, the batch runs that many times with
/// seeds `seed, seed+1, ...` and a mean-accuracy row closes the file.
pub fn run_batch<B: ModelBackend, T: ToolSuite>(
    questions: &[Question],
    config: &RunConfig,
    backend: &B,
    tools: &T,
    out_path: &Path,
    options: &BatchOptions,
) -> Result<Vec<RunSummary>, BatchError> {
    config.validate()?;
    let done = completed_ids(out_path)?;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(out_path)?;
    let mut writer = std::io::BufWriter::new(file);

    let mut summaries = Vec::new();
    for run in 0..options.repeat.max(1) {
        let seed = options.seed + run as u64;
        summaries.push(run_one_pass(
            questions, config, backend, tools, options, run, seed, &done, &mut writer,
        )?);
    }
    if options.repeat > 1 {
        let mean_accuracy =
            summaries.iter().map(|s| s.accuracy).sum::<f64>() / summaries.len() as f64;
        let record = ResultRecord::SummaryMean {
            v: RESULTS_VERSION,
            runs: options.repeat,
            mean_accuracy,
        };
        let line = serde_json::to_string(&record)?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentPool, AgentSpec};
    use crate::backend::ScriptedBackend;
    use crate::core::{AnswerKind, Purpose, ToolPermissions};
    use crate::tools::ScriptedToolSuite;

    fn pool() -> AgentPool {
        AgentPool::new(vec![
            AgentSpec::new("a", "A", "", ToolPermissions::none()),
            AgentSpec::new("b", "B", "", ToolPermissions::none()),
        ])
        .unwrap()
    }

    fn questions() -> Vec<Question> {
        vec![
            Question::new("q1", "one", AnswerKind::FreeForm).with_truth("X"),
            Question::new("q2", "two", AnswerKind::FreeForm).with_truth("Y"),
        ]
    }

    fn backend() -> ScriptedBackend {
        let mut builder = ScriptedBackend::builder();
        for round in 1..=2 {
            for id in ["a", "b"] {
                builder = builder.response(id, round, Purpose::Agent, "<<<X>>>");
                builder = builder.response(id, round, Purpose::Agent, "<<<X>>>");
            }
            builder = builder.response("judge", round, Purpose::Judge, "<<<YES>>>");
            builder = builder.response("judge", round, Purpose::Judge, "<<<YES>>>");
        }
        builder.build()
    }

    fn config() -> RunConfig {
        let mut c = RunConfig::new(pool());
        c.parallelism = 1;
        c
    }

    #[test]
    fn batch_writes_transcripts_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results.ndjson");
        let summaries = run_batch(
            &questions(),
            &config(),
            &backend(),
            &ScriptedToolSuite::empty(),
            &out,
            &BatchOptions { parallelism: 1, ..Default::default() },
        )
        .unwrap();
        assert_eq!(summaries.len(), 1);
        assert_eq!(summaries[0].scored, 2);
        assert_eq!(summaries[0].correct, 1); // q1 truth X matches, q2 truth Y does not
        assert!((summaries[0].accuracy - 0.5).abs() < 1e-12);

        let transcripts = load_results(&out).unwrap();
        assert_eq!(transcripts.len(), 2);
        assert_eq!(transcripts[0].1.question_id, "q1");
        assert_eq!(transcripts[1].1.question_id, "q2");
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.lines().last().unwrap().contains("summary"));
    }

    #[test]
    fn resume_skips_completed_questions() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results.ndjson");
        let opts = BatchOptions { parallelism: 1, ..Default::default() };
        run_batch(&questions(), &config(), &backend(), &ScriptedToolSuite::empty(), &out, &opts)
            .unwrap();
        // A second invocation re-runs nothing: the scripted backend has
        // no responses left for a fresh pass, so any re-run would fail.
        let fresh_backend = ScriptedBackend::builder().build();
        let summaries = run_batch(
            &questions(),
            &config(),
            &fresh_backend,
            &ScriptedToolSuite::empty(),
            &out,
            &opts,
        )
        .unwrap();
        assert_eq!(summaries[0].scored, 0);
        let transcripts = load_results(&out).unwrap();
        assert_eq!(transcripts.len(), 2);
    }

    #[test]
    fn per_question_failure_recorded_batch_continues() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results.ndjson");
        // Fixtures for q1 only; q2's agents all miss and the question fails.
        let mut builder = ScriptedBackend::builder();
        for round in 1..=2 {
            for id in ["a", "b"] {
                builder = builder.response(id, round, Purpose::Agent, "<<<X>>>");
            }
            builder = builder.response("judge", round, Purpose::Judge, "<<<YES>>>");
        }
        let summaries = run_batch(
            &questions(),
            &config(),
            &builder.build(),
            &ScriptedToolSuite::empty(),
            &out,
            &BatchOptions { parallelism: 1, ..Default::default() },
        )
        .unwrap();
        assert_eq!(summaries[0].scored, 1);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains("\"type\":\"error\""));
        assert!(text.contains("q2"));
    }

    #[test]
    fn repeat_adds_mean_row() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results.ndjson");
        let mut builder = ScriptedBackend::builder();
        for run in 0..2 {
            let _ = run;
            for round in 1..=2 {
                for id in ["a", "b"] {
                    for _ in 0..2 {
                        builder = builder.response(id, round, Purpose::Agent, "<<<X>>>");
                    }
                }
                for _ in 0..2 {
                    builder = builder.response("judge", round, Purpose::Judge, "<<<YES>>>");
                }
            }
        }
        let summaries = run_batch(
            &questions(),
            &config(),
            &builder.build(),
            &ScriptedToolSuite::empty(),
            &out,
            &BatchOptions { parallelism: 1, repeat: 2, ..Default::default() },
        )
        .unwrap();
        assert_eq!(summaries.len(), 2);
        assert_eq!(summaries[0].seed + 1, summaries[1].seed);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.lines().last().unwrap().contains("summary_mean"));
    }

    #[test]
    fn question_seed_is_stable() {
        assert_eq!(question_seed(7, "q1"), question_seed(7, "q1"));
        assert_ne!(question_seed(7, "q1"), question_seed(7, "q2"));
        assert_ne!(question_seed(7, "q1"), question_seed(8, "q1"));
    }
}
