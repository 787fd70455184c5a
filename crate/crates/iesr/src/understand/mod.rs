//! Stage 1a: information understanding with rule-guided verification.
//!
//! The extractor turns the question into a [`SemanticState`]; relations are
//! then filtered against the rule base (strict similarity threshold), scored
//! with deterministic facet checks, and kept only above a strict retention
//! threshold. The resulting chain R_high ⊆ R_cand ⊆ R_init is recorded in the
//! per-question trace.

mod rules;
mod score;
mod state;

pub use rules::{Constraint, Formula, RuleBase, RuleError, UnitDef, UnitFacet};
pub use score::{
    best_constraint, filter_high, jaccard, match_relation, score_relation, similarity,
    tokenize, CheckKind, CheckResult, ScoredRelation, W_LEX, W_UNIT,
};
pub use state::{
    parse_semantic_state, Entity, NumberLiteral, RelationHypothesis, SemanticState, UnitMention,
};

use crate::gateway::{
    Gateway, GatewayError, ModelRole, SamplingParams, Stage, TPL_EQUATION, TPL_UNDERSTANDING,
};
use crate::model::DatabaseSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnderstandingConfig {
    pub delta_match: f64,
    pub tau: f64,
    pub max_extraction_rounds: u32,
    /// Delegate the formula-signature check to a model judgment instead of
    /// token overlap. Off by default; the default scorer is model-free.
    pub llm_soft_check: bool,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for UnderstandingConfig {
    fn default() -> Self {
        UnderstandingConfig {
            delta_match: 0.5,
            tau: 0.5,
            max_extraction_rounds: 2,
            llm_soft_check: false,
            temperature: 0.2,
            seed: 0,
        }
    }
}

impl UnderstandingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.delta_match) {
            return Err(format!("delta_match out of [0,1]: {}", self.delta_match));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("tau out of [0,1]: {}", self.tau));
        }
        if self.max_extraction_rounds == 0 {
            return Err("max_extraction_rounds must be positive".into());
        }
        Ok(())
    }
}

/// Full understanding-stage output, also serialized as the stage trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnderstandingOutcome {
    pub state: SemanticState,
    pub r_init: Vec<RelationHypothesis>,
    pub r_cand: Vec<RelationHypothesis>,
    pub scored: Vec<ScoredRelation>,
    pub r_high: Vec<RelationHypothesis>,
    pub extraction_rounds: u32,
}

/// Calls the extractor and parses its labeled block, retrying when the
/// response has no structure. After the round budget the empty fallback
/// state is returned with its diagnostic flag set.
pub fn extract_semantic_state(
    question_text: &str,
    schema: &DatabaseSchema,
    schema_text: &str,
    config: &UnderstandingConfig,
    gateway: &Gateway,
) -> Result<(SemanticState, u32), GatewayError> {
    let mut slots = BTreeMap::new();
    slots.insert("question".to_string(), question_text.to_string());
    slots.insert("schema".to_string(), schema_text.to_string());

    let mut last = SemanticState { fallback: true, ..SemanticState::default() };
    for round in 0..config.max_extraction_rounds {
        let params = SamplingParams {
            temperature: config.temperature,
            seed: config.seed.wrapping_add(round as u64),
            ..SamplingParams::default()
        };
        let completion = gateway.complete(
            ModelRole::Extractor,
            Stage::Understanding,
            TPL_UNDERSTANDING,
            &slots,
            &params,
        )?;
        let state = parse_semantic_state(&completion.responses[0], schema);
        if !state.fallback {
            return Ok((state, round + 1));
        }
        last = state;
    }
    last.warnings.push(format!(
        "extraction fell back to the empty state after {} round(s)",
        config.max_extraction_rounds
    ));
    Ok((last, config.max_extraction_rounds))
}

fn judge_formula_check(
    rel: &RelationHypothesis,
    equation: &str,
    config: &UnderstandingConfig,
    gateway: &Gateway,
) -> Result<f64, GatewayError> {
    let mut slots = BTreeMap::new();
    slots.insert("question".to_string(), rel.text());
    slots.insert("state".to_string(), equation.to_string());
    let params = SamplingParams {
        temperature: config.temperature,
        seed: config.seed,
        ..SamplingParams::default()
    };
    let completion = gateway.complete(
        ModelRole::Extractor,
        Stage::Understanding,
        TPL_EQUATION,
        &slots,
        &params,
    )?;
    let verdict = completion.responses[0].to_ascii_uppercase();
    Ok(if verdict.contains("PASS") {
        1.0
    } else if verdict.contains("FAIL") {
        0.0
    } else {
        0.5
    })
}

/// Runs the whole stage: extract, match, score, filter.
pub fn run_understanding(
    question_text: &str,
    schema: &DatabaseSchema,
    schema_text: &str,
    rules: &RuleBase,
    config: &UnderstandingConfig,
    gateway: &Gateway,
) -> Result<UnderstandingOutcome, GatewayError> {
    let (state, extraction_rounds) =
        extract_semantic_state(question_text, schema, schema_text, config, gateway)?;

    let r_init = state.relations.clone();
    let r_cand: Vec<RelationHypothesis> = r_init
        .iter()
        .filter(|r| match_relation(r, rules, config.delta_match))
        .cloned()
        .collect();

    let mut scored: Vec<ScoredRelation> =
        r_cand.iter().map(|r| score_relation(r, rules)).collect();

    if config.llm_soft_check {
        for s in &mut scored {
            let Some(constraint) = rules.constraints.iter().find(|c| c.id == s.constraint_id)
            else {
                continue;
            };
            let Some(equation) = constraint.equation.as_deref() else { continue };
            for check in &mut s.plan {
                if check.kind == CheckKind::FormulaSignature {
                    check.outcome =
                        judge_formula_check(&s.relation, equation, config, gateway)?;
                }
            }
            if !s.plan.is_empty() {
                s.score = s.plan.iter().map(|c| c.outcome).sum::<f64>() / s.plan.len() as f64;
            }
        }
    }

    let r_high: Vec<RelationHypothesis> =
        filter_high(&scored, config.tau).into_iter().map(|s| s.relation).collect();

    Ok(UnderstandingOutcome { state, r_init, r_cand, scored, r_high, extraction_rounds })
}
