//! Usage accounting: per-role and per-stage counters plus a raw call log
//! that the conservation check replays.

use super::{ModelRole, Stage};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub gen_tokens: u64,
}

impl Counter {
    fn add(&mut self, other: &Counter) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.gen_tokens += other.gen_tokens;
    }
}

/// One gateway call. `delta` is what was actually added to the counters;
/// a cache hit under the default policy carries a zero delta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: ModelRole,
    pub stage: Stage,
    pub template_id: String,
    pub cached: bool,
    pub delta: Counter,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct UsageLedger {
    pub total: Counter,
    pub per_role: BTreeMap<ModelRole, Counter>,
    pub per_stage: BTreeMap<Stage, Counter>,
    pub log: Vec<CallRecord>,
}

impl UsageLedger {
    pub fn record(&mut self, record: CallRecord) {
        self.total.add(&record.delta);
        self.per_role.entry(record.role).or_default().add(&record.delta);
        self.per_stage.entry(record.stage).or_default().add(&record.delta);
        self.log.push(record);
    }

    /// Merges another ledger in (worker ledgers fold into the run ledger).
    pub fn absorb(&mut self, other: UsageLedger) {
        for record in other.log {
            self.record(record);
        }
    }

    /// Recomputes every counter from the raw call log and compares. A
    /// mismatch means some path updated counters without logging.
    pub fn conservation_check(&self) -> Result<(), String> {
        let mut replay = UsageLedger::default();
        for record in &self.log {
            replay.record(record.clone());
        }
        if replay.total != self.total {
            return Err(format!(
                "total mismatch: log replays to {:?}, ledger holds {:?}",
                replay.total, self.total
            ));
        }
        if replay.per_role != self.per_role {
            return Err("per-role counters do not match the call log".into());
        }
        if replay.per_stage != self.per_stage {
            return Err("per-stage counters do not match the call log".into());
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgCounter {
    pub calls: f64,
    pub prompt_tokens: f64,
    pub gen_tokens: f64,
}

fn average(c: &Counter, n: f64) -> AvgCounter {
    AvgCounter {
        calls: c.calls as f64 / n,
        prompt_tokens: c.prompt_tokens as f64 / n,
        gen_tokens: c.gen_tokens as f64 / n,
    }
}

/// Totals plus per-question averages, broken out by role and by stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub question_count: usize,
    pub total: Counter,
    pub per_role: BTreeMap<ModelRole, Counter>,
    pub per_stage: BTreeMap<Stage, Counter>,
    pub avg_total: AvgCounter,
    pub avg_per_role: BTreeMap<ModelRole, AvgCounter>,
    pub avg_per_stage: BTreeMap<Stage, AvgCounter>,
}

pub fn report_costs(ledger: &UsageLedger, question_count: usize) -> CostReport {
    assert!(question_count > 0, "question_count must be positive");
    let n = question_count as f64;
    CostReport {
        question_count,
        total: ledger.total,
        per_role: ledger.per_role.clone(),
        per_stage: ledger.per_stage.clone(),
        avg_total: average(&ledger.total, n),
        avg_per_role: ledger.per_role.iter().map(|(k, v)| (*k, average(v, n))).collect(),
        avg_per_stage: ledger.per_stage.iter().map(|(k, v)| (*k, average(v, n))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(role: ModelRole, stage: Stage, calls: u64, pt: u64, gt: u64) -> CallRecord {
        CallRecord {
            role,
            stage,
            template_id: "t".into(),
            cached: false,
            delta: Counter { calls, prompt_tokens: pt, gen_tokens: gt },
        }
    }

    #[test]
    fn totals_are_sums_of_deltas() {
        let mut ledger = UsageLedger::default();
        ledger.record(rec(ModelRole::Extractor, Stage::Understanding, 1, 10, 5));
        ledger.record(rec(ModelRole::Reasoner, Stage::Search, 1, 20, 8));
        ledger.record(rec(ModelRole::Reasoner, Stage::Search, 1, 20, 9));
        assert_eq!(ledger.total.calls, 3);
        assert_eq!(ledger.total.prompt_tokens, 50);
        assert_eq!(ledger.per_role[&ModelRole::Reasoner].gen_tokens, 17);
        assert_eq!(ledger.per_stage[&Stage::Search].calls, 2);
        ledger.conservation_check().unwrap();
    }

    #[test]
    fn averages_divide_by_question_count() {
        let mut ledger = UsageLedger::default();
        for _ in 0..51 {
            ledger.record(rec(ModelRole::Extractor, Stage::Understanding, 1, 0, 0));
        }
        let report = report_costs(&ledger, 10);
        assert!((report.avg_per_stage[&Stage::Understanding].calls - 5.1).abs() < 1e-12);
    }

    #[test]
    fn empty_ledger_reports_zero() {
        let report = report_costs(&UsageLedger::default(), 4);
        assert_eq!(report.total, Counter::default());
        assert_eq!(report.avg_total.calls, 0.0);
        assert!(report.per_role.is_empty());
    }

    #[test]
    fn absorb_preserves_conservation() {
        let mut a = UsageLedger::default();
        a.record(rec(ModelRole::Extractor, Stage::Understanding, 1, 1, 1));
        let mut b = UsageLedger::default();
        b.record(rec(ModelRole::Discriminator, Stage::Selection, 1, 2, 2));
        b.record(rec(ModelRole::Reasoner, Stage::Search, 1, 3, 3));
        a.absorb(b);
        assert_eq!(a.total.calls, 3);
        a.conservation_check().unwrap();
    }
}
