//! Named run-configuration presets covering the framework's published
//! variants: the default judge-terminated run, rule and fixed
//! termination ablations, diversity ablations, externally authored
//! (evolved) pools, and the scaled multi-pass configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{default_pool, AgentPool};
use crate::orchestrator::{RunConfig, SelectionStrategy, TerminationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantPreset {
    /// LLM-judge termination (min round 2) + majority vote.
    Tumix,
    /// Majority-stabilization rule termination + majority vote.
    TumixRule,
    /// Fixed 5 rounds + majority vote.
    TumixFixed,
    /// Fixed 5 rounds + random selection.
    TumixFixedR,
    /// One strong dual-tool agent sampled 15 times per round.
    TumixSingle,
    /// Three agents sampled 5 times each per round.
    TumixThree,
    /// A static externally authored pool (user-supplied pool file).
    TumixEvolve,
    /// Per-round pools sampled from the top-3 authored pools.
    TumixEvolveD,
    /// Four inference passes per agent at spread temperatures for the
    /// first two rounds.
    TumixPlus,
}

impl VariantPreset {
    pub const ALL: [VariantPreset; 9] = [
        VariantPreset::Tumix,
        VariantPreset::TumixRule,
        VariantPreset::TumixFixed,
        VariantPreset::TumixFixedR,
        VariantPreset::TumixSingle,
        VariantPreset::TumixThree,
        VariantPreset::TumixEvolve,
        VariantPreset::TumixEvolveD,
        VariantPreset::TumixPlus,
    ];

    pub fn parse(name: &str) -> Result<Self, PresetError> {
        match name {
            "tumix" => Ok(VariantPreset::Tumix),
            "tumix_rule" => Ok(VariantPreset::TumixRule),
            "tumix_fixed" => Ok(VariantPreset::TumixFixed),
            "tumix_fixedR" | "tumix_fixedr" => Ok(VariantPreset::TumixFixedR),
            "tumix_single" => Ok(VariantPreset::TumixSingle),
            "tumix_three" => Ok(VariantPreset::TumixThree),
            "tumix_evolve" => Ok(VariantPreset::TumixEvolve),
            "tumix_evolveD" | "tumix_evolved" => Ok(VariantPreset::TumixEvolveD),
            "tumix_plus" | "tumix+" => Ok(VariantPreset::TumixPlus),
            other => Err(PresetError::Unknown(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VariantPreset::Tumix => "tumix",
            VariantPreset::TumixRule => "tumix_rule",
            VariantPreset::TumixFixed => "tumix_fixed",
            VariantPreset::TumixFixedR => "tumix_fixedR",
            VariantPreset::TumixSingle => "tumix_single",
            VariantPreset::TumixThree => "tumix_three",
            VariantPreset::TumixEvolve => "tumix_evolve",
            VariantPreset::TumixEvolveD => "tumix_evolveD",
            VariantPreset::TumixPlus => "tumix_plus",
        }
    }
}

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset {0:?}")]
    Unknown(String),
    #[error("preset {0} requires an externally authored pool (--pool)")]
    PoolRequired(&'static str),
    #[error("preset tumix_evolveD requires at least one pool file")]
    PoolsRequired,
    #[error("agent {0:?} not found in the default pool")]
    MissingAgent(String),
}

/// External pool inputs a preset expansion may need.
#[derive(Debug, Clone, Default)]
pub struct PresetPools {
    /// Replaces the default pool outright (evolve).
    pub evolved: Option<AgentPool>,
    /// Top-ranked authored pools for per-round sampling (evolveD).
    pub evolved_choices: Vec<AgentPool>,
}

/// Default temperatures for multi-pass rounds: evenly spread midpoints
/// over the provider range [0, 2]. Overridable in config.
pub const DEFAULT_PLUS_TEMPERATURES: [f64; 4] = [0.25, 0.75, 1.25, 1.75];

/// Default strong agent for the single-agent ablation; configurable by
/// supplying a custom pool instead of a preset.
pub const SINGLE_AGENT_ID: &str = "cs_gs";
pub const THREE_AGENT_IDS: [&str; 3] = ["cs_gs", "c_plus", "csg_gs"];

fn subset_pool(ids: &[&str], samples: u32) -> Result<AgentPool, PresetError> {
    let base = default_pool();
    let mut specs = Vec::with_capacity(ids.len());
    for id in ids {
        let spec = base.get(id).ok_or_else(|| PresetError::MissingAgent(id.to_string()))?;
        let mut spec = spec.clone();
        spec.samples_per_round = samples;
        specs.push(spec);
    }
    Ok(AgentPool::new(specs).expect("subset of a valid pool is valid"))
}

/// Expands a preset into a run configuration. Expansion is pure data:
/// the same preset and pools always produce the same config.
pub fn expand_preset(preset: VariantPreset, pools: &PresetPools) -> Result<RunConfig, PresetError> {
    let mut config = RunConfig::new(default_pool());
    match preset {
        VariantPreset::Tumix => {}
        VariantPreset::TumixRule => {
            config.termination = TerminationPolicy::RuleStabilization;
        }
        VariantPreset::TumixFixed => {
            config.termination = TerminationPolicy::Fixed;
            config.r_max = 5;
        }
        VariantPreset::TumixFixedR => {
            config.termination = TerminationPolicy::Fixed;
            config.r_max = 5;
            config.selection = SelectionStrategy::Random;
        }
        VariantPreset::TumixSingle => {
            config.pool = subset_pool(&[SINGLE_AGENT_ID], 15)?;
        }
        VariantPreset::TumixThree => {
            config.pool = subset_pool(&THREE_AGENT_IDS, 5)?;
        }
        VariantPreset::TumixEvolve => {
            let pool = pools
                .evolved
                .clone()
                .ok_or(PresetError::PoolRequired("tumix_evolve"))?;
            config.pool = pool;
        }
        VariantPreset::TumixEvolveD => {
            if pools.evolved_choices.is_empty() {
                return Err(PresetError::PoolsRequired);
            }
            // The per-question round schedule is sampled by the batch
            // runner from these choices; the first choice stands in as
            // the nominal pool.
            config.pool = pools.evolved_choices[0].clone();
        }
        VariantPreset::TumixPlus => {
            config.samples_schedule = vec![4, 4];
            config.temperature_schedule = DEFAULT_PLUS_TEMPERATURES.to_vec();
        }
    }
    Ok(config)
}
