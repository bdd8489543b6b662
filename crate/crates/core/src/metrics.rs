//! Quantitative analyses over correctness matrices: coverage, per-round
//! statistics, transition categories, combined group scores, group
//! sampling, and the accuracy-versus-cost objective report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::CostLedger;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("agent subset must be non-empty")]
    EmptySubset,
    #[error("round index {0} out of range (matrix has {1} rounds)")]
    RoundOutOfRange(usize, usize),
    #[error("agent index {0} out of range (matrix has {1} agents)")]
    AgentOutOfRange(usize, usize),
    #[error("unknown agent id {0:?}")]
    UnknownAgent(String),
    #[error("correct-agent count {0} out of range for pool size {1}")]
    CountOutOfRange(usize, usize),
    #[error("transition categories are defined for a pool of {expected} agents, got {actual}")]
    UnsupportedPoolSize { expected: usize, actual: usize },
    #[error("group size {group} exceeds pool size {pool}")]
    GroupTooLarge { group: usize, pool: usize },
    #[error("mean {0} must be positive")]
    ZeroMean(&'static str),
    #[error("matrix must be non-empty")]
    EmptyMatrix,
}

/// Questions x agents x rounds boolean correctness. Entries without an
/// answer are recorded as incorrect and flagged missing so reports can
/// distinguish "wrong" from "absent".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    pub question_ids: Vec<String>,
    pub agent_ids: Vec<String>,
    pub round_labels: Vec<u32>,
    correct: Vec<bool>,
    missing: Vec<bool>,
}

impl CorrectnessMatrix {
    pub fn new(question_ids: Vec<String>, agent_ids: Vec<String>, round_labels: Vec<u32>) -> Self {
        let size = question_ids.len() * agent_ids.len() * round_labels.len();
        Self {
            question_ids,
            agent_ids,
            round_labels,
            correct: vec![false; size],
            missing: vec![true; size],
        }
    }

    pub fn questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn rounds(&self) -> usize {
        self.round_labels.len()
    }

    fn index(&self, q: usize, a: usize, r: usize) -> usize {
        (q * self.agents() + a) * self.rounds() + r
    }

    pub fn set(&mut self, q: usize, a: usize, r: usize, correct: bool) {
        let i = self.index(q, a, r);
        self.correct[i] = correct;
        self.missing[i] = false;
    }

    pub fn is_correct(&self, q: usize, a: usize, r: usize) -> bool {
        self.correct[self.index(q, a, r)]
    }

    pub fn is_missing(&self, q: usize, a: usize, r: usize) -> bool {
        self.missing[self.index(q, a, r)]
    }

    pub fn agent_index(&self, agent_id: &str) -> Result<usize, MetricsError> {
        self.agent_ids
            .iter()
            .position(|id| id == agent_id)
            .ok_or_else(|| MetricsError::UnknownAgent(agent_id.to_string()))
    }

    /// Per-agent accuracy at one round.
    pub fn agent_accuracy(&self, a: usize, r: usize) -> f64 {
        let correct = (0..self.questions()).filter(|&q| self.is_correct(q, a, r)).count();
        correct as f64 / self.questions() as f64
    }

    /// Correct-agent count per question at one round.
    pub fn correct_counts(&self, r: usize) -> Vec<usize> {
        (0..self.questions())
            .map(|q| (0..self.agents()).filter(|&a| self.is_correct(q, a, r)).count())
            .collect()
    }
}

/// Fraction of questions where at least one agent in the subset is
/// correct at the given round.
pub fn coverage(
    matrix: &CorrectnessMatrix,
    agent_indices: &[usize],
    round: usize,
) -> Result<f64, MetricsError> {
    if agent_indices.is_empty() {
        return Err(MetricsError::EmptySubset);
    }
    if round >= matrix.rounds() {
        return Err(MetricsError::RoundOutOfRange(round, matrix.rounds()));
    }
    for &a in agent_indices {
        if a >= matrix.agents() {
            return Err(MetricsError::AgentOutOfRange(a, matrix.agents()));
        }
    }
    if matrix.questions() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let covered = (0..matrix.questions())
        .filter(|&q| agent_indices.iter().any(|&a| matrix.is_correct(q, a, round)))
        .count();
    Ok(covered as f64 / matrix.questions() as f64)
}

/// Per-round full-pool coverage, mean of per-agent accuracies, and the
/// per-agent accuracy columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStatistics {
    pub agent_ids: Vec<String>,
    pub round_labels: Vec<u32>,
    pub coverage: Vec<f64>,
    pub average: Vec<f64>,
    /// Indexed `[agent][round]`, matching an agents-as-rows,
    /// rounds-as-columns table layout.
    pub per_agent: Vec<Vec<f64>>,
}

pub fn round_statistics(matrix: &CorrectnessMatrix) -> Result<RoundStatistics, MetricsError> {
    if matrix.questions() == 0 || matrix.agents() == 0 || matrix.rounds() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let all_agents: Vec<usize> = (0..matrix.agents()).collect();
    let mut coverage_by_round = Vec::with_capacity(matrix.rounds());
    let mut average_by_round = Vec::with_capacity(matrix.rounds());
    let per_agent: Vec<Vec<f64>> = (0..matrix.agents())
        .map(|a| (0..matrix.rounds()).map(|r| matrix.agent_accuracy(a, r)).collect())
        .collect();
    for r in 0..matrix.rounds() {
        coverage_by_round.push(coverage(matrix, &all_agents, r)?);
        let mean = (0..matrix.agents()).map(|a| per_agent[a][r]).sum::<f64>() / matrix.agents() as f64;
        average_by_round.push(mean);
    }
    Ok(RoundStatistics {
        agent_ids: matrix.agent_ids.clone(),
        round_labels: matrix.round_labels.clone(),
        coverage: coverage_by_round,
        average: average_by_round,
        per_agent,
    })
}

/// How many of the 15 agents answered a question correctly, bucketed
/// into the five flow categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCategory {
    AllWrong,
    Few,
    Moderate,
    High,
    AllCorrect,
}

impl std::fmt::Display for TransitionCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            TransitionCategory::AllWrong => "all_wrong",
            TransitionCategory::Few => "few",
            TransitionCategory::Moderate => "moderate",
            TransitionCategory::High => "high",
            TransitionCategory::AllCorrect => "all_correct",
        };
        write!(f, "{name}")
    }
}

pub const TRANSITION_POOL_SIZE: usize = 15;

/// Category bins: 0, 1-3, 4-11, 12-14, 15. Defined for the 15-agent
/// pool only.
pub fn categorize_count(count: usize, pool_size: usize) -> Result<TransitionCategory, MetricsError> {
    if pool_size != TRANSITION_POOL_SIZE {
        return Err(MetricsError::UnsupportedPoolSize {
            expected: TRANSITION_POOL_SIZE,
            actual: pool_size,
        });
    }
    if count > pool_size {
        return Err(MetricsError::CountOutOfRange(count, pool_size));
    }
    Ok(match count {
        0 => TransitionCategory::AllWrong,
        1..=3 => TransitionCategory::Few,
        4..=11 => TransitionCategory::Moderate,
        12..=14 => TransitionCategory::High,
        _ => TransitionCategory::AllCorrect,
    })
}

/// One edge of the round-to-round category flow (the Sankey data).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from_round: u32,
    pub to_round: u32,
    pub from: TransitionCategory,
    pub to: TransitionCategory,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFlows {
    /// Category sequence per question, one entry per round.
    pub categories: Vec<Vec<TransitionCategory>>,
    pub flows: Vec<FlowEdge>,
}

/// Maps per-question correct-agent counts to categories and tallies the
/// round-to-round flows. `counts[q][r]` is the number of correct agents
/// for question `q` at round `r`.
pub fn transition_categories(
    counts: &[Vec<usize>],
    pool_size: usize,
    round_labels: &[u32],
) -> Result<TransitionFlows, MetricsError> {
    let mut categories = Vec::with_capacity(counts.len());
    for per_round in counts {
        let row: Result<Vec<_>, _> =
            per_round.iter().map(|&c| categorize_count(c, pool_size)).collect();
        categories.push(row?);
    }
    let rounds = categories.first().map(|c| c.len()).unwrap_or(0);
    let mut flows = Vec::new();
    for r in 0..rounds.saturating_sub(1) {
        let mut tally: std::collections::BTreeMap<(TransitionCategory, TransitionCategory), usize> =
            std::collections::BTreeMap::new();
        for sequence in &categories {
            *tally.entry((sequence[r], sequence[r + 1])).or_insert(0) += 1;
        }
        for ((from, to), count) in tally {
            flows.push(FlowEdge {
                from_round: round_labels.get(r).copied().unwrap_or(r as u32 + 1),
                to_round: round_labels.get(r + 1).copied().unwrap_or(r as u32 + 2),
                from,
                to,
                count,
            });
        }
    }
    Ok(TransitionFlows { categories, flows })
}

/// Normalized coverage plus normalized average score.
pub fn combined_score(
    coverage_i: f64,
    average_i: f64,
    mean_coverage: f64,
    mean_average: f64,
) -> Result<f64, MetricsError> {
    if mean_coverage <= 0.0 {
        return Err(MetricsError::ZeroMean("coverage"));
    }
    if mean_average <= 0.0 {
        return Err(MetricsError::ZeroMean("average"));
    }
    Ok(coverage_i / mean_coverage + average_i / mean_average)
}

/// One sampled agent group with its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: Vec<String>,
    pub coverage: f64,
    pub average: f64,
    pub combined: f64,
}

/// Uniformly samples `n_samples` groups of `group_size` agents, scores
/// each at the given round, normalizes by the sample means, and returns
/// the top `top_k` by combined score. Deterministic under the seed.
#[allow(clippy::too_many_arguments)]
pub fn sample_top_groups(
    matrix: &CorrectnessMatrix,
    group_size: usize,
    n_samples: usize,
    top_k: usize,
    seed: u64,
    round: usize,
) -> Result<Vec<GroupScore>, MetricsError> {
    let pool = matrix.agents();
    if group_size > pool {
        return Err(MetricsError::GroupTooLarge { group: group_size, pool });
    }
    if group_size == 0 {
        return Err(MetricsError::EmptySubset);
    }
    if round >= matrix.rounds() {
        return Err(MetricsError::RoundOutOfRange(round, matrix.rounds()));
    }

    let accuracies: Vec<f64> = (0..pool).map(|a| matrix.agent_accuracy(a, round)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<(Vec<usize>, f64, f64)> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut indices = rand::seq::index::sample(&mut rng, pool, group_size).into_vec();
        indices.sort_unstable();
        let cov = coverage(matrix, &indices, round)?;
        let avg = indices.iter().map(|&a| accuracies[a]).sum::<f64>() / group_size as f64;
        groups.push((indices, cov, avg));
    }

    let n = groups.len() as f64;
    let mean_coverage = groups.iter().map(|g| g.1).sum::<f64>() / n;
    let mean_average = groups.iter().map(|g| g.2).sum::<f64>() / n;
    let mut scored: Vec<GroupScore> = groups
        .into_iter()
        .map(|(indices, cov, avg)| {
            let combined = combined_score(cov, avg, mean_coverage, mean_average)?;
            Ok(GroupScore {
                group: indices.iter().map(|&a| matrix.agent_ids[a].clone()).collect(),
                coverage: cov,
                average: avg,
                combined,
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    scored.sort_by(|a, b| b.combined.partial_cmp(&a.combined).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(top_k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostUnit {
    Inferences,
    Tokens,
}

/// Accuracy minus lambda times cost in the chosen unit. Reporting only;
/// never used in control flow.
pub fn objective_report(accuracy: f64, ledger: &CostLedger, lambda: f64, unit: CostUnit) -> f64 {
    let cost = match unit {
        CostUnit::Inferences => ledger.total_inferences() as f64,
        CostUnit::Tokens => ledger.total_tokens() as f64,
    };
    accuracy - lambda * cost
}
