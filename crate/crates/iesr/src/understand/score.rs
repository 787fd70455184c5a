//! Lightweight relation matcher and the plan/executor consistency scorer.
//!
//! similarity = 0.6 * Jaccard(relation tokens, equation tokens)
//!            + 0.4 * unit_compat(relation unit, constraint unit facet)
//!
//! When either side lacks a unit, the unit term is skipped and the lexical
//! weight renormalizes to 1. Thresholds are strict: matching requires
//! sim > delta, retention requires score > tau.

use super::rules::{Constraint, RuleBase, UnitFacet};
use super::state::RelationHypothesis;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const W_LEX: f64 = 0.6;
pub const W_UNIT: f64 = 0.4;

pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

/// Jaccard over normalized token sets. Two empty sets carry no evidence and
/// score 0 rather than 1.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// 1.0 when the unit shares the facet's dimension with a known conversion,
/// 0.5 when the dimension matches but no fixed factor exists, 0 otherwise.
fn unit_compat(symbol: &str, facet: &UnitFacet, rules: &RuleBase) -> f64 {
    let Some(dim) = rules.dimension_of(symbol) else { return 0.0 };
    if dim != facet.dimension {
        return 0.0;
    }
    let targets: Vec<String> = if facet.units.is_empty() {
        rules
            .units
            .iter()
            .filter(|u| u.dimension == facet.dimension && !u.symbol.eq_ignore_ascii_case(symbol))
            .map(|u| u.symbol.clone())
            .collect()
    } else {
        facet.units.clone()
    };
    if targets.is_empty() {
        // the facet names a dimension with no other unit to convert into;
        // sharing the dimension is all that can be checked
        return 1.0;
    }
    if targets.iter().any(|t| rules.convert(symbol, t).is_some()) {
        1.0
    } else {
        0.5
    }
}

/// Eq-style similarity of one relation against one constraint.
pub fn similarity(rel: &RelationHypothesis, constraint: &Constraint, rules: &RuleBase) -> f64 {
    let lexical = jaccard(
        &tokenize(&rel.text()),
        &tokenize(constraint.equation.as_deref().unwrap_or_default()),
    );
    match (&rel.implied_unit, &constraint.unit) {
        (Some(symbol), Some(facet)) => {
            W_LEX * lexical + W_UNIT * unit_compat(symbol, facet, rules)
        }
        _ => lexical,
    }
}

pub fn best_constraint<'a>(
    rel: &RelationHypothesis,
    rules: &'a RuleBase,
) -> Option<(&'a Constraint, f64)> {
    let mut best: Option<(&Constraint, f64)> = None;
    for c in &rules.constraints {
        let sim = similarity(rel, c, rules);
        if best.map(|(_, s)| sim > s).unwrap_or(true) {
            best = Some((c, sim));
        }
    }
    best
}

/// True iff some constraint's similarity strictly exceeds the threshold.
pub fn match_relation(rel: &RelationHypothesis, rules: &RuleBase, delta_match: f64) -> bool {
    rules.constraints.iter().any(|c| similarity(rel, c, rules) > delta_match)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    EntityClass,
    UnitDimension,
    ConversionPath,
    FormulaSignature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    /// 1.0 pass, 0.5 soft, 0.0 fail.
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRelation {
    pub relation: RelationHypothesis,
    pub constraint_id: String,
    pub plan: Vec<CheckResult>,
    pub score: f64,
}

/// Ordered facet checks, restricted to the facets the constraint carries.
fn plan_for(constraint: &Constraint) -> Vec<CheckKind> {
    let mut plan = Vec::new();
    if !constraint.entities.is_empty() {
        plan.push(CheckKind::EntityClass);
    }
    if constraint.unit.is_some() {
        plan.push(CheckKind::UnitDimension);
        plan.push(CheckKind::ConversionPath);
    }
    if constraint.equation.is_some() {
        plan.push(CheckKind::FormulaSignature);
    }
    plan
}

fn run_check(
    kind: CheckKind,
    rel: &RelationHypothesis,
    constraint: &Constraint,
    rules: &RuleBase,
) -> f64 {
    match kind {
        CheckKind::EntityClass => {
            let subject = tokenize(&rel.subject);
            let object = tokenize(&rel.object);
            let tags: BTreeSet<String> =
                constraint.entities.iter().map(|e| e.to_ascii_lowercase()).collect();
            let subject_hit = !subject.is_disjoint(&tags);
            let object_hit = !object.is_disjoint(&tags) || rel.object.parse::<f64>().is_ok();
            match (subject_hit, object_hit) {
                (true, true) => 1.0,
                (false, false) => 0.0,
                _ => 0.5,
            }
        }
        CheckKind::UnitDimension => {
            let facet = constraint.unit.as_ref().expect("plan includes unit facet");
            match &rel.implied_unit {
                None => 0.5,
                Some(symbol) => match rules.dimension_of(symbol) {
                    Some(dim) if dim == facet.dimension => 1.0,
                    Some(_) => 0.0,
                    None => 0.5,
                },
            }
        }
        CheckKind::ConversionPath => {
            let facet = constraint.unit.as_ref().expect("plan includes unit facet");
            match &rel.implied_unit {
                None => 0.5,
                Some(symbol) => match unit_compat(symbol, facet, rules) {
                    c if c >= 1.0 => 1.0,
                    c if c >= 0.5 => 0.5,
                    _ => 0.0,
                },
            }
        }
        CheckKind::FormulaSignature => {
            let equation = constraint.equation.as_deref().expect("plan includes equation facet");
            match &rel.implied_formula {
                None => 0.5,
                Some(f) => {
                    let j = jaccard(&tokenize(f), &tokenize(equation));
                    if j >= 0.5 {
                        1.0
                    } else if j > 0.0 {
                        0.5
                    } else {
                        0.0
                    }
                }
            }
        }
    }
}

/// Plans and executes the facet checks against the best-matching constraint;
/// the score is the mean over executed checks.
pub fn score_relation(rel: &RelationHypothesis, rules: &RuleBase) -> ScoredRelation {
    let Some((constraint, _)) = best_constraint(rel, rules) else {
        return ScoredRelation {
            relation: rel.clone(),
            constraint_id: String::new(),
            plan: vec![],
            score: 0.0,
        };
    };
    let plan: Vec<CheckResult> = plan_for(constraint)
        .into_iter()
        .map(|kind| CheckResult { kind, outcome: run_check(kind, rel, constraint, rules) })
        .collect();
    let score = if plan.is_empty() {
        0.0
    } else {
        plan.iter().map(|c| c.outcome).sum::<f64>() / plan.len() as f64
    };
    ScoredRelation { relation: rel.clone(), constraint_id: constraint.id.clone(), plan, score }
}

/// Keeps relations whose score strictly exceeds tau, preserving order.
pub fn filter_high(scored: &[ScoredRelation], tau: f64) -> Vec<ScoredRelation> {
    scored.iter().filter(|s| s.score > tau).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(subject: &str, predicate: &str, object: &str) -> RelationHypothesis {
        RelationHypothesis {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            implied_unit: None,
            implied_formula: None,
        }
    }

    fn speed_rel() -> RelationHypothesis {
        RelationHypothesis {
            implied_unit: Some("km/h".into()),
            implied_formula: Some("speed = distance / time".into()),
            ..rel("speed", "equals", "distance over time")
        }
    }

    #[test]
    fn identical_tokens_and_compatible_unit_score_one() {
        let rules = RuleBase::starter();
        let constraint = Constraint {
            id: "c".into(),
            entities: vec![],
            unit: Some(UnitFacet { dimension: "speed".into(), units: vec!["m/s".into()] }),
            equation: Some("speed equals distance over time".into()),
        };
        let r = RelationHypothesis {
            implied_unit: Some("km/h".into()),
            ..rel("speed", "equals", "distance over time")
        };
        let sim = similarity(&r, &constraint, &rules);
        assert!((sim - 1.0).abs() < 1e-12, "sim = {sim}");
    }

    #[test]
    fn disjoint_tokens_and_incompatible_unit_score_zero() {
        let rules = RuleBase::starter();
        let constraint = Constraint {
            id: "c".into(),
            entities: vec![],
            unit: Some(UnitFacet { dimension: "mass".into(), units: vec![] }),
            equation: Some("density = mass / volume".into()),
        };
        let r = RelationHypothesis {
            implied_unit: Some("h".into()),
            ..rel("price", "exceeds", "threshold")
        };
        assert_eq!(similarity(&r, &constraint, &rules), 0.0);
    }

    #[test]
    fn linear_combination_weights() {
        let rules = RuleBase::starter();
        // relation text tokens {a, b}, equation tokens {a, c, d, b} minus
        // overlap chosen to force jaccard exactly 0.5
        let constraint = Constraint {
            id: "c".into(),
            entities: vec![],
            unit: Some(UnitFacet { dimension: "length".into(), units: vec!["m".into()] }),
            equation: Some("alpha beta gamma delta".into()),
        };
        let r = RelationHypothesis {
            implied_unit: Some("km".into()),
            ..rel("alpha", "beta", "epsilon zeta")
        };
        // tokens: {alpha, beta, epsilon, zeta} vs {alpha, beta, gamma, delta}
        // jaccard = 2/6 = 1/3; unit fully compatible
        let sim = similarity(&r, &constraint, &rules);
        assert!((sim - (0.6 * (1.0 / 3.0) + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn missing_unit_renormalizes_to_lexical_only() {
        let rules = RuleBase::starter();
        let constraint = Constraint {
            id: "c".into(),
            entities: vec![],
            unit: Some(UnitFacet { dimension: "speed".into(), units: vec![] }),
            equation: Some("speed equals distance over time".into()),
        };
        let r = rel("speed", "equals", "distance over time");
        assert!((similarity(&r, &constraint, &rules) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn match_relation_is_strict_at_the_boundary() {
        let rules = RuleBase {
            constraints: vec![Constraint {
                id: "c".into(),
                entities: vec![],
                unit: None,
                equation: Some("alpha beta".into()),
            }],
            units: vec![],
            formulas: vec![],
        };
        // tokens {alpha} vs {alpha, beta}: jaccard = 0.5 exactly
        let r = rel("alpha", "alpha", "alpha");
        assert!((similarity(&r, &rules.constraints[0], &rules) - 0.5).abs() < 1e-12);
        assert!(!match_relation(&r, &rules, 0.5));
        assert!(match_relation(&r, &rules, 0.49));
    }

    #[test]
    fn empty_rule_base_matches_nothing() {
        let rules = RuleBase::default();
        assert!(!match_relation(&speed_rel(), &rules, 0.0));
        let scored = score_relation(&speed_rel(), &rules);
        assert_eq!(scored.score, 0.0);
        assert!(scored.plan.is_empty());
    }

    #[test]
    fn all_checks_passing_scores_one() {
        let rules = RuleBase::starter();
        let scored = score_relation(&speed_rel(), &rules);
        assert_eq!(scored.constraint_id, "c-speed");
        assert_eq!(scored.plan.len(), 4);
        assert!((scored.score - 1.0).abs() < 1e-12, "score = {}", scored.score);
    }

    #[test]
    fn mean_over_mixed_outcomes() {
        let rules = RuleBase::starter();
        let constraint = Constraint {
            id: "c".into(),
            entities: vec!["speed".into(), "distance".into(), "time".into()],
            unit: Some(UnitFacet { dimension: "speed".into(), units: vec![] }),
            equation: Some("speed = distance / time".into()),
        };
        let rules_one = RuleBase { constraints: vec![constraint], ..rules };
        // subject hits a tag, object does not (0.5); unit missing (0.5, 0.5);
        // formula matches exactly (1.0) -> mean = 0.625
        let r = RelationHypothesis {
            implied_formula: Some("speed = distance / time".into()),
            ..rel("speed", "of", "the probe")
        };
        let scored = score_relation(&r, &rules_one);
        assert_eq!(scored.plan.len(), 4);
        assert!((scored.score - 0.625).abs() < 1e-12, "score = {}", scored.score);
    }

    #[test]
    fn single_facet_plan_restricts_checks() {
        let rules = RuleBase::starter();
        let constraint = Constraint {
            id: "only-unit".into(),
            entities: vec![],
            unit: Some(UnitFacet { dimension: "length".into(), units: vec!["m".into()] }),
            equation: None,
        };
        let rules_one = RuleBase { constraints: vec![constraint], ..rules };
        let r = RelationHypothesis { implied_unit: Some("km".into()), ..rel("a", "b", "c") };
        let scored = score_relation(&r, &rules_one);
        assert_eq!(scored.plan.len(), 2);
        assert!((scored.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_high_is_strict_and_order_preserving() {
        let rules = RuleBase::starter();
        let mk = |score: f64| ScoredRelation {
            relation: rel("a", "b", "c"),
            constraint_id: "c".into(),
            plan: vec![CheckResult { kind: CheckKind::EntityClass, outcome: score }],
            score,
        };
        let _ = rules;
        let scored = vec![mk(0.3), mk(0.6), mk(0.9)];
        let kept = filter_high(&scored, 0.5);
        assert_eq!(kept.iter().map(|s| s.score).collect::<Vec<_>>(), vec![0.6, 0.9]);
        assert!(filter_high(&scored, 1.0).is_empty());
        assert_eq!(filter_high(&scored, 0.0).len(), 3);
    }

    proptest! {
        #[test]
        fn similarity_bounded(
            subject in "[a-z]{1,8}",
            predicate in "[a-z]{1,8}",
            object in "[a-z ]{1,16}",
            unit in proptest::option::of("(km|h|kg|usd|zz)"),
        ) {
            let rules = RuleBase::starter();
            let r = RelationHypothesis {
                subject, predicate, object,
                implied_unit: unit,
                implied_formula: None,
            };
            for c in &rules.constraints {
                let sim = similarity(&r, c, &rules);
                prop_assert!((0.0..=1.0).contains(&sim));
            }
        }

        #[test]
        fn lexical_component_symmetric(a in "[a-z ]{1,20}", b in "[a-z ]{1,20}") {
            let ta = tokenize(&a);
            let tb = tokenize(&b);
            prop_assert_eq!(jaccard(&ta, &tb).to_bits(), jaccard(&tb, &ta).to_bits());
        }

        #[test]
        fn score_bounded_and_plan_nonempty_when_positive(
            subject in "[a-z]{1,8}",
            object in "[a-z]{1,8}",
        ) {
            let rules = RuleBase::starter();
            let scored = score_relation(&rel(&subject, "of", &object), &rules);
            prop_assert!((0.0..=1.0).contains(&scored.score));
            if scored.score > 0.0 {
                prop_assert!(!scored.plan.is_empty());
            }
        }
    }
}
