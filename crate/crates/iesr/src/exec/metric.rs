//! Execution accuracy: run predicted and gold SQL against the same database
//! and count result-set matches.

use super::compare::{order_sensitive, results_equal};
use super::{execute, DbRegistry};
use crate::model::ComparePolicy;
use serde::{Deserialize, Serialize};

/// One scored case. `correct` is meaningful only when `gold_valid`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub question_id: String,
    pub db_id: String,
    pub correct: bool,
    pub gold_valid: bool,
    pub pred_error: Option<String>,
    pub gold_error: Option<String>,
    pub pred_elapsed_ms: u64,
    pub gold_elapsed_ms: u64,
}

/// Case whose gold SQL failed to execute; excluded from the EX denominator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvalidGoldCase {
    pub question_id: String,
    pub db_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExReport {
    /// Percentage in [0, 100] over cases with valid gold.
    pub ex: f64,
    pub correct: usize,
    pub valid_total: usize,
    pub invalid_gold: Vec<InvalidGoldCase>,
    pub verdicts: Vec<CaseVerdict>,
}

/// A (prediction, gold) pair to score.
#[derive(Debug, Clone)]
pub struct ScoredPair {
    pub question_id: String,
    pub db_id: String,
    pub pred_sql: String,
    pub gold_sql: String,
}

/// Computes execution accuracy over the given pairs.
///
/// Order sensitivity is decided per case by the gold SQL: a top-level ORDER BY
/// in the gold promotes that comparison to list semantics. Gold failures are
/// excluded from the denominator and reported separately; an empty valid set
/// yields EX = 0.
pub fn compute_ex(
    pairs: &[ScoredPair],
    registry: &DbRegistry,
    timeout_ms: u64,
    policy: &ComparePolicy,
) -> ExReport {
    let mut verdicts = Vec::with_capacity(pairs.len());
    let mut invalid_gold = Vec::new();
    let mut correct = 0usize;
    let mut valid_total = 0usize;

    for pair in pairs {
        let db = match registry.shared(&pair.db_id) {
            Ok(db) => db,
            Err(e) => {
                invalid_gold.push(InvalidGoldCase {
                    question_id: pair.question_id.clone(),
                    db_id: pair.db_id.clone(),
                    error: e.to_string(),
                });
                verdicts.push(CaseVerdict {
                    question_id: pair.question_id.clone(),
                    db_id: pair.db_id.clone(),
                    correct: false,
                    gold_valid: false,
                    pred_error: None,
                    gold_error: Some(e.to_string()),
                    pred_elapsed_ms: 0,
                    gold_elapsed_ms: 0,
                });
                continue;
            }
        };

        let case_policy = policy
            .clone()
            .with_order_sensitive(order_sensitive(&pair.gold_sql));
        let gold = execute(&pair.gold_sql, &db, timeout_ms, &case_policy);

        match &gold.result {
            Err(failure) => {
                let msg = format!("{:?}: {}", failure.kind, failure.message);
                invalid_gold.push(InvalidGoldCase {
                    question_id: pair.question_id.clone(),
                    db_id: pair.db_id.clone(),
                    error: msg.clone(),
                });
                verdicts.push(CaseVerdict {
                    question_id: pair.question_id.clone(),
                    db_id: pair.db_id.clone(),
                    correct: false,
                    gold_valid: false,
                    pred_error: None,
                    gold_error: Some(msg),
                    pred_elapsed_ms: 0,
                    gold_elapsed_ms: gold.elapsed_ms,
                });
            }
            Ok(gold_table) => {
                valid_total += 1;
                let pred = execute(&pair.pred_sql, &db, timeout_ms, &case_policy);
                let (is_correct, pred_error) = match &pred.result {
                    Ok(pred_table) => {
                        (results_equal(pred_table, gold_table, &case_policy), None)
                    }
                    Err(failure) => {
                        (false, Some(format!("{:?}: {}", failure.kind, failure.message)))
                    }
                };
                if is_correct {
                    correct += 1;
                }
                verdicts.push(CaseVerdict {
                    question_id: pair.question_id.clone(),
                    db_id: pair.db_id.clone(),
                    correct: is_correct,
                    gold_valid: true,
                    pred_error,
                    gold_error: None,
                    pred_elapsed_ms: pred.elapsed_ms,
                    gold_elapsed_ms: gold.elapsed_ms,
                });
            }
        }
    }

    let ex = if valid_total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / valid_total as f64
    };
    ExReport { ex, correct, valid_total, invalid_gold, verdicts }
}
