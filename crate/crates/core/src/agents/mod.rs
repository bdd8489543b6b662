//! The agent pool: strategy specifications, the 15 pre-designed agents,
//! and prompt construction for first-round and refinement-round
//! messages.

pub mod prompts;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{AgentAnswer, Question, ToolPermissions};

/// Which search backend an agent's queries are routed to: an external
/// search API (`gs`), the model provider's inherent search (`llm`), or
/// both combined (`com`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchVariant {
    Gs,
    Llm,
    Com,
}

impl std::fmt::Display for SearchVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchVariant::Gs => write!(f, "gs"),
            SearchVariant::Llm => write!(f, "llm"),
            SearchVariant::Com => write!(f, "com"),
        }
    }
}

/// A named reasoning strategy: head prompt, tool permissions, search
/// variant, and sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub agent_id: String,
    pub display_name: String,
    pub head_prompt: String,
    #[serde(default)]
    pub tool_permissions: ToolPermissions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_variant: Option<SearchVariant>,
    #[serde(default = "default_tool_budget")]
    pub tool_budget: u32,
    #[serde(default = "default_samples")]
    pub samples_per_round: u32,
    #[serde(default)]
    pub temperature: f64,
    /// User-supplied text substituted into a `{hints}` slot in the head
    /// prompt, when the prompt carries one.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub hint: String,
}

fn default_tool_budget() -> u32 {
    5
}

fn default_samples() -> u32 {
    1
}

impl AgentSpec {
    pub fn new(id: &str, name: &str, head: impl Into<String>, perms: ToolPermissions) -> Self {
        Self {
            agent_id: id.to_string(),
            display_name: name.to_string(),
            head_prompt: head.into(),
            tool_permissions: perms,
            search_variant: None,
            tool_budget: default_tool_budget(),
            samples_per_round: default_samples(),
            temperature: 0.0,
            hint: String::new(),
        }
    }

    pub fn with_variant(mut self, variant: SearchVariant) -> Self {
        self.search_variant = Some(variant);
        self
    }

    pub fn with_samples(mut self, samples: u32) -> Self {
        self.samples_per_round = samples;
        self
    }

    fn validate(&self) -> Result<(), PoolError> {
        if self.agent_id.is_empty() {
            return Err(PoolError::Invalid("agent_id must be non-empty".into()));
        }
        if self.tool_budget < 1 {
            return Err(PoolError::Invalid(format!("{}: tool_budget must be >= 1", self.agent_id)));
        }
        if self.samples_per_round < 1 {
            return Err(PoolError::Invalid(format!(
                "{}: samples_per_round must be >= 1",
                self.agent_id
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(PoolError::Invalid(format!("{}: temperature must be >= 0", self.agent_id)));
        }
        match (self.search_variant, self.tool_permissions.search) {
            (Some(_), false) => Err(PoolError::Invalid(format!(
                "{}: search variant set but search permission missing",
                self.agent_id
            ))),
            (None, true) => Err(PoolError::Invalid(format!(
                "{}: search permitted but no search variant configured",
                self.agent_id
            ))),
            _ => Ok(()),
        }
    }
}

/// An ordered pool of agent specs. Order is load-bearing: it defines
/// vote tie-breaking and report column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPool {
    pub specs: Vec<AgentSpec>,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pool must contain at least one agent")]
    Empty,
    #[error("duplicate agent_id: {0}")]
    DuplicateId(String),
    #[error("invalid agent spec: {0}")]
    Invalid(String),
    #[error("answers span multiple rounds: found rounds {0} and {1}")]
    MixedRounds(u32, u32),
    #[error("failed to read pool file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse pool file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported pool schema version {0} (expected {CURRENT_POOL_VERSION})")]
    Version(u32),
}

impl AgentPool {
    pub fn new(specs: Vec<AgentSpec>) -> Result<Self, PoolError> {
        if specs.is_empty() {
            return Err(PoolError::Empty);
        }
        let mut seen = HashSet::new();
        for spec in &specs {
            spec.validate()?;
            if !seen.insert(spec.agent_id.clone()) {
                return Err(PoolError::DuplicateId(spec.agent_id.clone()));
            }
        }
        Ok(Self { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, agent_id: &str) -> Option<&AgentSpec> {
        self.specs.iter().find(|s| s.agent_id == agent_id)
    }

    /// Total answers produced per round before any schedule multiplier.
    pub fn samples_per_round(&self) -> u32 {
        self.specs.iter().map(|s| s.samples_per_round).sum()
    }
}

/// The 15 pre-designed agents: a direct-prompt baseline, chain-of-thought
/// text and code variants, a search-only agent, two code-interpreter
/// agents, and dual-tool / guided / guided-plus families with three
/// search variants each.
pub fn default_pool() -> AgentPool {
    use prompts::*;
    let mut specs = vec![
        AgentSpec::new("base", "w/o TTS", "", ToolPermissions::none()),
        AgentSpec::new("cot", "CoT Agent", COT_HEAD, ToolPermissions::none()),
        AgentSpec::new("cot_code", "CoT-Code Agent", COT_CODE_HEAD, ToolPermissions::none()),
        AgentSpec::new("s", "Search Agent", SEARCH_HEAD, ToolPermissions::search_only())
            .with_variant(SearchVariant::Llm),
        AgentSpec::new("c", "Code Agent", CODE_HEAD, ToolPermissions::code_only()),
        AgentSpec::new("c_plus", "Code Agent+", code_plus_head(), ToolPermissions::code_only()),
    ];
    for variant in [SearchVariant::Gs, SearchVariant::Llm, SearchVariant::Com] {
        specs.push(
            AgentSpec::new(
                &format!("cs_{variant}"),
                &format!("Dual-Tool Agent ({variant})"),
                DUAL_TOOL_HEAD,
                ToolPermissions::both(),
            )
            .with_variant(variant),
        );
    }
    for variant in [SearchVariant::Gs, SearchVariant::Llm, SearchVariant::Com] {
        specs.push(
            AgentSpec::new(
                &format!("csg_{variant}"),
                &format!("Guided Agent ({variant})"),
                guided_head(),
                ToolPermissions::both(),
            )
            .with_variant(variant),
        );
    }
    for variant in [SearchVariant::Gs, SearchVariant::Llm, SearchVariant::Com] {
        specs.push(
            AgentSpec::new(
                &format!("csg_plus_{variant}"),
                &format!("Guided Agent+ ({variant})"),
                guided_plus_head(),
                ToolPermissions::both(),
            )
            .with_variant(variant),
        );
    }
    AgentPool::new(specs).expect("default pool is valid")
}

pub const CURRENT_POOL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolDocument {
    version: u32,
    agents: Vec<AgentSpec>,
}

/// Loads a pool-definition document (JSON, one `version` field plus the
/// agent list). Unknown fields and invariant violations are rejected.
pub fn load_pool(text: &str) -> Result<AgentPool, PoolError> {
    let doc: PoolDocument = serde_json::from_str(text)?;
    if doc.version != CURRENT_POOL_VERSION {
        return Err(PoolError::Version(doc.version));
    }
    AgentPool::new(doc.agents)
}

pub fn load_pool_file(path: &std::path::Path) -> Result<AgentPool, PoolError> {
    load_pool(&std::fs::read_to_string(path)?)
}

/// Serializes a pool to the pool-definition document format.
pub fn pool_to_document(pool: &AgentPool) -> String {
    serde_json::to_string_pretty(&PoolDocument {
        version: CURRENT_POOL_VERSION,
        agents: pool.specs.clone(),
    })
    .expect("pool serialization cannot fail")
}

fn substitute(template: &str, round: u32, hint: &str) -> String {
    template
        .replace("{round_num}", &round.to_string())
        .replace("{hints}", hint)
        .trim_end()
        .to_string()
}

/// Joins prior answers for a joint prompt, each labeled by an anonymous
/// positional index rather than an agent name.
pub fn join_answers(answers: &[AgentAnswer]) -> String {
    answers
        .iter()
        .enumerate()
        .map(|(i, a)| format!("Answer {}:\n{}", i + 1, a.raw_response))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Builds the prompt an agent sees at a given round.
///
/// Round 1 (empty `prior`): the spec's head prompt followed by the
/// question body. Round 2 onward: the refinement template filled with
/// the question and all previous-round raw responses in pool order,
/// followed by the spec's head prompt as the method instruction.
pub fn build_round_prompt(
    spec: &AgentSpec,
    question: &Question,
    prior: &[AgentAnswer],
) -> Result<String, PoolError> {
    if prior.is_empty() {
        let prompt = if spec.head_prompt.is_empty() {
            question.body.clone()
        } else {
            format!("{}\n\n{}", spec.head_prompt, question.body)
        };
        return Ok(substitute(&prompt, 1, &spec.hint));
    }
    let round = prior[0].round;
    if let Some(other) = prior.iter().find(|a| a.round != round) {
        return Err(PoolError::MixedRounds(round, other.round));
    }
    let joined = join_answers(prior);
    let mut prompt = prompts::REFINEMENT_TEMPLATE
        .replace("{question}", &question.body)
        .replace("{joined_answers}", &joined);
    if !spec.head_prompt.is_empty() {
        prompt.push_str("\n\n");
        prompt.push_str(&spec.head_prompt);
    }
    Ok(substitute(&prompt, round + 1, &spec.hint))
}

/// Renders the consensus-judge prompt over one round's answers.
pub fn build_judge_prompt(question: &Question, round: u32, answers: &[AgentAnswer]) -> String {
    prompts::JUDGE_TEMPLATE
        .replace("{round_num}", &round.to_string())
        .replace("{question}", &question.body)
        .replace("{joined_answers}", &join_answers(answers))
}

/// Renders the selector prompt (the refinement template with the final
/// round's candidates).
pub fn build_selector_prompt(question: &Question, answers: &[AgentAnswer]) -> String {
    prompts::REFINEMENT_TEMPLATE
        .replace("{question}", &question.body)
        .replace("{joined_answers}", &join_answers(answers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::AnswerKind;

    fn q() -> Question {
        Question::new("q1", "What is 2+2?", AnswerKind::Numeric)
    }

    fn answer(agent: &str, round: u32, raw: &str) -> AgentAnswer {
        AgentAnswer {
            agent_id: agent.to_string(),
            round,
            raw_response: raw.to_string(),
            answer: None,
            trace_ref: format!("{agent}#r{round}s0"),
        }
    }

    #[test]
    fn default_pool_has_fifteen_agents() {
        let pool = default_pool();
        assert_eq!(pool.len(), 15);
    }

    #[test]
    fn default_pool_tool_partition_matches_table() {
        let pool = default_pool();
        let no_tools: Vec<_> = pool
            .specs
            .iter()
            .filter(|s| !s.tool_permissions.code && !s.tool_permissions.search)
            .map(|s| s.agent_id.as_str())
            .collect();
        assert_eq!(no_tools, vec!["base", "cot", "cot_code"]);
        let search_only = pool
            .specs
            .iter()
            .filter(|s| !s.tool_permissions.code && s.tool_permissions.search)
            .count();
        assert_eq!(search_only, 1);
        let code_only = pool
            .specs
            .iter()
            .filter(|s| s.tool_permissions.code && !s.tool_permissions.search)
            .count();
        assert_eq!(code_only, 2);
        let dual = pool
            .specs
            .iter()
            .filter(|s| s.tool_permissions.code && s.tool_permissions.search)
            .count();
        assert_eq!(dual, 9);
    }

    #[test]
    fn cs_family_has_three_variants() {
        let pool = default_pool();
        let cs: Vec<_> = pool
            .specs
            .iter()
            .filter(|s| s.agent_id.starts_with("cs_"))
            .filter_map(|s| s.search_variant)
            .collect();
        assert_eq!(cs, vec![SearchVariant::Gs, SearchVariant::Llm, SearchVariant::Com]);
    }

    #[test]
    fn cot_has_no_tool_permissions() {
        let pool = default_pool();
        let cot = pool.get("cot").unwrap();
        assert_eq!(cot.tool_permissions, ToolPermissions::none());
        assert!(cot.search_variant.is_none());
    }

    #[test]
    fn round_one_prompt_is_head_plus_question() {
        let pool = default_pool();
        let cot = pool.get("cot").unwrap();
        let prompt = build_round_prompt(cot, &q(), &[]).unwrap();
        assert_eq!(prompt, format!("{}\n\n{}", prompts::COT_HEAD, "What is 2+2?"));
    }

    #[test]
    fn base_round_one_prompt_is_bare_question() {
        let pool = default_pool();
        let base = pool.get("base").unwrap();
        assert_eq!(build_round_prompt(base, &q(), &[]).unwrap(), "What is 2+2?");
    }

    #[test]
    fn refinement_prompt_embeds_all_answers_once_in_order() {
        let pool = default_pool();
        let cot = pool.get("cot").unwrap();
        let prior = vec![
            answer("base", 1, "guess alpha <<<4>>>"),
            answer("cot", 1, "careful beta <<<4>>>"),
        ];
        let prompt = build_round_prompt(cot, &q(), &prior).unwrap();
        assert_eq!(prompt.matches("What is 2+2?").count(), 1);
        assert_eq!(prompt.matches("guess alpha <<<4>>>").count(), 1);
        assert_eq!(prompt.matches("careful beta <<<4>>>").count(), 1);
        assert!(prompt.find("guess alpha").unwrap() < prompt.find("careful beta").unwrap());
        assert!(prompt.ends_with(prompts::COT_HEAD));
    }

    #[test]
    fn refinement_labels_are_positional_not_agent_names() {
        let pool = default_pool();
        let spec = pool.get("base").unwrap();
        let prior = vec![answer("cs_gs", 1, "x"), answer("csg_llm", 1, "y")];
        let prompt = build_round_prompt(spec, &q(), &prior).unwrap();
        assert!(prompt.contains("Answer 1:\nx"));
        assert!(prompt.contains("Answer 2:\ny"));
        assert!(!prompt.contains("cs_gs"));
        assert!(!prompt.contains("csg_llm"));
    }

    #[test]
    fn mixed_round_prior_rejected() {
        let pool = default_pool();
        let spec = pool.get("cot").unwrap();
        let prior = vec![answer("a", 1, "x"), answer("b", 2, "y")];
        assert!(matches!(
            build_round_prompt(spec, &q(), &prior),
            Err(PoolError::MixedRounds(1, 2))
        ));
    }

    #[test]
    fn prompt_construction_is_deterministic() {
        let pool = default_pool();
        let spec = pool.get("csg_plus_com").unwrap();
        let prior = vec![answer("a", 2, "text one"), answer("b", 2, "text two")];
        let p1 = build_round_prompt(spec, &q(), &prior).unwrap();
        let p2 = build_round_prompt(spec, &q(), &prior).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn hint_slot_substituted() {
        let pool = default_pool();
        let mut spec = pool.get("c_plus").unwrap().clone();
        spec.hint = "Prefer exact integer arithmetic.".to_string();
        let prompt = build_round_prompt(&spec, &q(), &[]).unwrap();
        assert!(prompt.contains("Prefer exact integer arithmetic."));
        assert!(!prompt.contains("{hints}"));
    }

    #[test]
    fn pool_document_round_trips_defaults() {
        let pool = default_pool();
        let doc = pool_to_document(&pool);
        let loaded = load_pool(&doc).unwrap();
        assert_eq!(loaded, pool);
    }

    #[test]
    fn duplicate_agent_id_rejected() {
        let mut specs = default_pool().specs;
        specs.push(specs[0].clone());
        assert!(matches!(AgentPool::new(specs), Err(PoolError::DuplicateId(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let doc = r#"{"version":1,"agents":[{"agent_id":"a","display_name":"A","head_prompt":"","mystery":3}]}"#;
        assert!(matches!(load_pool(doc), Err(PoolError::Parse(_))));
    }

    #[test]
    fn variant_permission_inconsistency_rejected() {
        let doc = r#"{"version":1,"agents":[{"agent_id":"a","display_name":"A","head_prompt":"","search_variant":"gs"}]}"#;
        assert!(matches!(load_pool(doc), Err(PoolError::Invalid(_))));
    }

    #[test]
    fn thirty_agent_pool_loads() {
        let mut specs = default_pool().specs;
        for i in 0..15 {
            let mut s = specs[i].clone();
            s.agent_id = format!("generated_{i}");
            s.display_name = format!("Generated {i}");
            specs.push(s);
        }
        let doc = pool_to_document(&AgentPool::new(specs).unwrap());
        assert_eq!(load_pool(&doc).unwrap().len(), 30);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(matches!(load_pool(r#"{"version":1,"agents":[]}"#), Err(PoolError::Empty)));
    }
}
