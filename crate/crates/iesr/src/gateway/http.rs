//! Live chat-completion backend over HTTP JSON. Used by the optional live
//! mode; CI runs never touch it.

use super::{Backend, BackendError, BackendRequest, BackendResponse, RoleConfig};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::time::Duration;

pub struct HttpBackend {
    agent: ureq::Agent,
    roles: BTreeMap<super::ModelRole, RoleConfig>,
}

impl HttpBackend {
    pub fn new(roles: BTreeMap<super::ModelRole, RoleConfig>, timeout_ms: u64) -> HttpBackend {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .build();
        HttpBackend { agent: config.into(), roles }
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &'static str {
        "http"
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let role_cfg = self.roles.get(&req.role).ok_or_else(|| BackendError {
            transient: false,
            message: format!("no endpoint configured for role {}", req.role),
        })?;

        let payload = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "n": req.params.n_samples,
            "temperature": req.params.temperature,
            "seed": req.params.seed,
            "max_tokens": req.params.max_tokens,
        });

        let mut request = self.agent.post(&role_cfg.endpoint);
        if let Some(env_var) = &role_cfg.api_key_env {
            if let Ok(key) = std::env::var(env_var) {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
        }

        let mut response = request.send_json(&payload).map_err(|e| match e {
            ureq::Error::StatusCode(code) => BackendError {
                transient: code == 429 || code >= 500,
                message: format!("endpoint returned status {code}"),
            },
            other => BackendError { transient: true, message: other.to_string() },
        })?;

        let body: Value = response.body_mut().read_json().map_err(|e| BackendError {
            transient: false,
            message: format!("unparseable response body: {e}"),
        })?;

        let choices = body
            .get("choices")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError {
                transient: false,
                message: "response has no choices array".into(),
            })?;
        let responses: Vec<String> = choices
            .iter()
            .filter_map(|c| {
                c.pointer("/message/content").and_then(Value::as_str).map(str::to_string)
            })
            .collect();
        if responses.len() != req.params.n_samples as usize {
            return Err(BackendError {
                transient: false,
                message: format!(
                    "requested {} samples, endpoint returned {}",
                    req.params.n_samples,
                    responses.len()
                ),
            });
        }

        let usage = body.get("usage");
        let prompt_tokens = usage.and_then(|u| u.get("prompt_tokens")).and_then(Value::as_u64);
        let gen_tokens = usage.and_then(|u| u.get("completion_tokens")).and_then(Value::as_u64);
        Ok(BackendResponse { responses, prompt_tokens, gen_tokens })
    }
}
