//! Uniform access to the three model roles: extractor, reasoner, and
//! discriminator. One `complete` entry point renders a template, consults the
//! response cache, plays the scripted mock or the live endpoint, retries
//! transient transport failures with exponential backoff, and records usage.

mod cache;
mod http;
mod ledger;
mod mock;
mod template;

pub use cache::{CachedValue, DiskCache};
pub use http::HttpBackend;
pub use ledger::{report_costs, AvgCounter, CallRecord, CostReport, Counter, UsageLedger};
pub use mock::{QueueMode, Script, ScriptEntry, ScriptedMock};
pub use template::{
    PromptTemplate, TemplateError, TemplateRegistry, TPL_DISCRIMINATOR, TPL_ENTITY_EXTRACTION,
    TPL_EQUATION, TPL_IDENTIFY_COLUMN, TPL_SCHEMA_SELECTION, TPL_SQL_GENERATION, TPL_SQL_REVISION,
    TPL_UNDERSTANDING,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;
use thiserror::Error;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Extractor,
    Reasoner,
    Discriminator,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Extractor => "extractor",
            ModelRole::Reasoner => "reasoner",
            ModelRole::Discriminator => "discriminator",
        })
    }
}

/// Pipeline stage a call is attributed to in the cost report.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Understanding,
    Search,
    Selection,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Understanding => "understanding",
            Stage::Search => "search",
            Stage::Selection => "selection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
    pub n_samples: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 0.0, seed: 0, max_tokens: 1024, n_samples: 1 }
    }
}

/// Live-endpoint settings for one role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

pub struct BackendRequest<'a> {
    pub role: ModelRole,
    pub model: &'a str,
    pub template_id: &'a str,
    pub prompt: &'a str,
    pub slots_digest: &'a str,
    pub params: &'a SamplingParams,
}

#[derive(Debug)]
pub struct BackendResponse {
    pub responses: Vec<String>,
    pub prompt_tokens: Option<u64>,
    pub gen_tokens: Option<u64>,
}

#[derive(Debug)]
pub struct BackendError {
    pub transient: bool,
    pub message: String,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend {backend} failed after {attempts} attempt(s): {message}")]
    Backend { backend: String, attempts: u32, message: String },
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub responses: Vec<String>,
    pub prompt_tokens: u64,
    pub gen_tokens: u64,
    pub cached: bool,
}

pub struct GatewayOptions {
    pub cache: Option<DiskCache>,
    /// When true, cache hits still bump the call counters.
    pub count_cached: bool,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Model name per role, part of every cache key.
    pub models: BTreeMap<ModelRole, String>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            cache: None,
            count_cached: false,
            max_retries: 2,
            backoff_base_ms: 250,
            models: BTreeMap::new(),
        }
    }
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    templates: TemplateRegistry,
    options: GatewayOptions,
    ledger: Mutex<UsageLedger>,
}

/// Rough token count used when the backend reports no usage numbers.
fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn digest_slots(slots: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in slots {
        hasher.update(k.as_bytes());
        hasher.update([0u8]);
        hasher.update(v.as_bytes());
        hasher.update([1u8]);
    }
    hex::encode(hasher.finalize())
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, options: GatewayOptions) -> Gateway {
        Gateway {
            backend,
            templates: TemplateRegistry::builtin(),
            options,
            ledger: Mutex::new(UsageLedger::default()),
        }
    }

    /// Gateway over a scripted mock with no cache; the usual test setup.
    pub fn mock(script: Script) -> Gateway {
        Gateway::new(Box::new(ScriptedMock::new(script)), GatewayOptions::default())
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn ledger_snapshot(&self) -> UsageLedger {
        self.ledger.lock().unwrap().clone()
    }

    fn model_for(&self, role: ModelRole) -> &str {
        self.options.models.get(&role).map(String::as_str).unwrap_or("offline")
    }

    fn cache_key(&self, role: ModelRole, prompt: &str, params: &SamplingParams) -> String {
        let mut hasher = Sha256::new();
        hasher.update(role.to_string().as_bytes());
        hasher.update([0u8]);
        hasher.update(self.model_for(role).as_bytes());
        hasher.update([0u8]);
        hasher.update(prompt.as_bytes());
        hasher.update([0u8]);
        hasher.update(params.temperature.to_bits().to_le_bytes());
        hasher.update(params.seed.to_le_bytes());
        hasher.update(params.max_tokens.to_le_bytes());
        hasher.update(params.n_samples.to_le_bytes());
        hex::encode(hasher.finalize())
    }

    /// Renders the template and returns `params.n_samples` responses.
    pub fn complete(
        &self,
        role: ModelRole,
        stage: Stage,
        template_id: &str,
        slots: &BTreeMap<String, String>,
        params: &SamplingParams,
    ) -> Result<Completion, GatewayError> {
        let prompt = self.templates.render(template_id, slots)?;
        let key = self.cache_key(role, &prompt, params);

        if let Some(cache) = &self.options.cache {
            if let Some(hit) = cache.get(&key) {
                let delta = if self.options.count_cached {
                    Counter {
                        calls: 1,
                        prompt_tokens: hit.prompt_tokens,
                        gen_tokens: hit.gen_tokens,
                    }
                } else {
                    Counter::default()
                };
                self.ledger.lock().unwrap().record(CallRecord {
                    role,
                    stage,
                    template_id: template_id.to_string(),
                    cached: true,
                    delta,
                });
                return Ok(Completion {
                    responses: hit.responses,
                    prompt_tokens: hit.prompt_tokens,
                    gen_tokens: hit.gen_tokens,
                    cached: true,
                });
            }
        }

        let slots_digest = digest_slots(slots);
        let request = BackendRequest {
            role,
            model: self.model_for(role),
            template_id,
            prompt: &prompt,
            slots_digest: &slots_digest,
            params,
        };

        let mut attempts = 0;
        let response = loop {
            attempts += 1;
            match self.backend.complete(&request) {
                Ok(r) => break r,
                Err(e) if e.transient && attempts <= self.options.max_retries => {
                    let backoff = self.options.backoff_base_ms << (attempts - 1);
                    std::thread::sleep(std::time::Duration::from_millis(backoff));
                }
                Err(e) => {
                    return Err(GatewayError::Backend {
                        backend: self.backend.name().to_string(),
                        attempts,
                        message: e.message,
                    })
                }
            }
        };

        let prompt_tokens = response.prompt_tokens.unwrap_or_else(|| estimate_tokens(&prompt));
        let gen_tokens = response
            .gen_tokens
            .unwrap_or_else(|| response.responses.iter().map(|r| estimate_tokens(r)).sum());

        self.ledger.lock().unwrap().record(CallRecord {
            role,
            stage,
            template_id: template_id.to_string(),
            cached: false,
            delta: Counter { calls: 1, prompt_tokens, gen_tokens },
        });

        if let Some(cache) = &self.options.cache {
            cache.put(
                &key,
                &CachedValue {
                    responses: response.responses.clone(),
                    prompt_tokens,
                    gen_tokens,
                },
            )?;
        }

        Ok(Completion { responses: response.responses, prompt_tokens, gen_tokens, cached: false })
    }
}
