//! Deterministic scripted backend for tests and offline runs.
//!
//! Entries match on template id plus either an exact slot digest or a set of
//! substrings that must all appear in the rendered prompt. Each entry owns an
//! ordered response queue; `once` mode errors when the queue runs dry,
//! `cycle` wraps around. A call that matches no entry is a hard error: a
//! script never improvises.

use super::{Backend, BackendError, BackendRequest, BackendResponse};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueMode {
    #[default]
    Once,
    Cycle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub template: String,
    /// Substrings that must all occur in the rendered prompt.
    #[serde(default)]
    pub when: Vec<String>,
    /// Exact digest of the slot map, for pinpoint matching.
    #[serde(default)]
    pub slots_digest: Option<String>,
    #[serde(default)]
    pub mode: QueueMode,
    pub responses: Vec<String>,
}

impl ScriptEntry {
    fn matches(&self, req: &BackendRequest) -> bool {
        if self.template != req.template_id {
            return false;
        }
        if let Some(digest) = &self.slots_digest {
            if digest != req.slots_digest {
                return false;
            }
        }
        self.when.iter().all(|needle| req.prompt.contains(needle))
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

pub struct ScriptedMock {
    script: Script,
    cursors: Mutex<Vec<usize>>,
    calls: Mutex<usize>,
}

impl ScriptedMock {
    pub fn new(script: Script) -> ScriptedMock {
        let cursors = vec![0; script.entries.len()];
        ScriptedMock { script, cursors: Mutex::new(cursors), calls: Mutex::new(0) }
    }

    pub fn from_json(raw: &str) -> Result<ScriptedMock, serde_json::Error> {
        Ok(ScriptedMock::new(serde_json::from_str(raw)?))
    }

    pub fn from_file(path: &Path) -> anyhow::Result<ScriptedMock> {
        let raw = std::fs::read_to_string(path)?;
        Ok(ScriptedMock::from_json(&raw)?)
    }

    pub fn calls_made(&self) -> usize {
        *self.calls.lock().unwrap()
    }

    fn take(&self, index: usize, n: usize) -> Result<Vec<String>, BackendError> {
        let entry = &self.script.entries[index];
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = &mut cursors[index];
        let len = entry.responses.len();
        match entry.mode {
            QueueMode::Once => {
                if *cursor + n > len {
                    return Err(BackendError {
                        transient: false,
                        message: format!(
                            "script exhausted: entry {index} (template {}) has {len} responses, \
                             cursor {cursor}, requested {n}",
                            entry.template
                        ),
                    });
                }
                let out = entry.responses[*cursor..*cursor + n].to_vec();
                *cursor += n;
                Ok(out)
            }
            QueueMode::Cycle => {
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(entry.responses[*cursor % len].clone());
                    *cursor += 1;
                }
                Ok(out)
            }
        }
    }
}

impl Backend for ScriptedMock {
    fn name(&self) -> &'static str {
        "scripted-mock"
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        *self.calls.lock().unwrap() += 1;
        let index = self
            .script
            .entries
            .iter()
            .position(|e| e.matches(req))
            .ok_or_else(|| BackendError {
                transient: false,
                message: format!(
                    "no script entry matches template {} (prompt head: {:?})",
                    req.template_id,
                    req.prompt.chars().take(80).collect::<String>()
                ),
            })?;
        let responses = self.take(index, req.params.n_samples as usize)?;
        Ok(BackendResponse { responses, prompt_tokens: None, gen_tokens: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::SamplingParams;

    fn req<'a>(template: &'a str, prompt: &'a str, params: &'a SamplingParams) -> BackendRequest<'a> {
        BackendRequest {
            role: crate::gateway::ModelRole::Reasoner,
            model: "mock",
            template_id: template,
            prompt,
            slots_digest: "d0",
            params,
        }
    }

    fn entry(template: &str, responses: &[&str], mode: QueueMode) -> ScriptEntry {
        ScriptEntry {
            template: template.into(),
            when: vec![],
            slots_digest: None,
            mode,
            responses: responses.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn plays_back_in_order_and_exhausts() {
        let mock = ScriptedMock::new(Script {
            entries: vec![entry("t", &["A", "B"], QueueMode::Once)],
        });
        let params = SamplingParams { n_samples: 2, ..SamplingParams::default() };
        let out = mock.complete(&req("t", "p", &params)).unwrap();
        assert_eq!(out.responses, vec!["A", "B"]);
        let err = mock.complete(&req("t", "p", &params)).unwrap_err();
        assert!(err.message.contains("exhausted"));
        assert!(!err.transient);
    }

    #[test]
    fn cycle_mode_wraps() {
        let mock = ScriptedMock::new(Script {
            entries: vec![entry("t", &["A", "B", "C"], QueueMode::Cycle)],
        });
        let params = SamplingParams { n_samples: 2, ..SamplingParams::default() };
        assert_eq!(mock.complete(&req("t", "p", &params)).unwrap().responses, vec!["A", "B"]);
        assert_eq!(mock.complete(&req("t", "p", &params)).unwrap().responses, vec!["C", "A"]);
    }

    #[test]
    fn when_substrings_route_between_entries() {
        let mut gen_velocity = entry("t", &["V"], QueueMode::Cycle);
        gen_velocity.when = vec!["velocity".into()];
        let gen_other = entry("t", &["O"], QueueMode::Cycle);
        let mock = ScriptedMock::new(Script { entries: vec![gen_velocity, gen_other] });
        let params = SamplingParams { n_samples: 1, ..SamplingParams::default() };
        assert_eq!(
            mock.complete(&req("t", "average velocity of probes", &params)).unwrap().responses,
            vec!["V"]
        );
        assert_eq!(mock.complete(&req("t", "count rows", &params)).unwrap().responses, vec!["O"]);
    }

    #[test]
    fn unmatched_template_is_a_hard_error() {
        let mock = ScriptedMock::new(Script { entries: vec![entry("t", &["A"], QueueMode::Once)] });
        let params = SamplingParams::default();
        let err = mock.complete(&req("u", "p", &params)).unwrap_err();
        assert!(err.message.contains("no script entry"));
    }

    #[test]
    fn script_json_round_trips() {
        let raw = r#"{"entries": [
            {"template": "sql-generation", "when": ["speed"], "mode": "cycle",
             "responses": ["```sql\nSELECT 1\n```"]}
        ]}"#;
        let mock = ScriptedMock::from_json(raw).unwrap();
        assert_eq!(mock.script.entries.len(), 1);
        assert_eq!(mock.script.entries[0].mode, QueueMode::Cycle);
    }
}
