//! Semantic ranking of schema elements against the validated question
//! context. The provider is pluggable; the built-in fallback is cosine
//! similarity over term-frequency vectors, so the pipeline never requires an
//! embedding service. Provider failures fall back with a diagnostic instead
//! of aborting the stage.

use std::collections::BTreeMap;

pub trait SimilarityProvider {
    fn name(&self) -> &str;
    /// Scores each element text against the query, in [0,1].
    fn score(&self, query: &str, elements: &[String]) -> Result<Vec<f64>, String>;
}

fn tf_vector(text: &str) -> BTreeMap<String, f64> {
    let mut v = BTreeMap::new();
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
    {
        *v.entry(token).or_insert(0.0) += 1.0;
    }
    v
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, va)| b.get(k).map(|vb| va * vb)).sum();
    if dot == 0.0 {
        return 0.0;
    }
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Term-frequency cosine scorer, the default offline provider.
#[derive(Debug, Default, Clone)]
pub struct TfCosineProvider;

impl SimilarityProvider for TfCosineProvider {
    fn name(&self) -> &'static str {
        "tf-cosine"
    }

    fn score(&self, query: &str, elements: &[String]) -> Result<Vec<f64>, String> {
        let q = tf_vector(query);
        Ok(elements.iter().map(|e| cosine(&q, &tf_vector(e))).collect())
    }
}

/// Embedding endpoint provider for live runs: posts texts, receives vectors,
/// scores by cosine mapped into [0,1].
pub struct HttpEmbeddingProvider {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: &str, model: &str, api_key_env: Option<String>) -> HttpEmbeddingProvider {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .build();
        HttpEmbeddingProvider {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key_env,
            agent: config.into(),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, String> {
        let payload = serde_json::json!({ "model": self.model, "input": texts });
        let mut request = self.agent.post(&self.endpoint);
        if let Some(env_var) = &self.api_key_env {
            if let Ok(key) = std::env::var(env_var) {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
        }
        let mut response = request.send_json(&payload).map_err(|e| e.to_string())?;
        let body: serde_json::Value =
            response.body_mut().read_json().map_err(|e| e.to_string())?;
        let data = body
            .get("data")
            .and_then(serde_json::Value::as_array)
            .ok_or("embedding response has no data array")?;
        data.iter()
            .map(|item| {
                item.get("embedding")
                    .and_then(serde_json::Value::as_array)
                    .map(|v| v.iter().filter_map(serde_json::Value::as_f64).collect())
                    .ok_or_else(|| "embedding item malformed".to_string())
            })
            .collect()
    }
}

impl SimilarityProvider for HttpEmbeddingProvider {
    fn name(&self) -> &'static str {
        "http-embedding"
    }

    fn score(&self, query: &str, elements: &[String]) -> Result<Vec<f64>, String> {
        let mut texts = Vec::with_capacity(elements.len() + 1);
        texts.push(query.to_string());
        texts.extend(elements.iter().cloned());
        let vectors = self.embed(&texts)?;
        let (q, rest) = vectors.split_first().ok_or("empty embedding response")?;
        let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(rest
            .iter()
            .map(|e| {
                let dot: f64 = q.iter().zip(e).map(|(a, b)| a * b).sum();
                let ne = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nq == 0.0 || ne == 0.0 {
                    0.0
                } else {
                    // cosine in [-1,1] mapped to [0,1]
                    (dot / (nq * ne) + 1.0) / 2.0
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankedElement {
    pub key: String,
    pub score: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Ranking {
    pub ranked: Vec<RankedElement>,
    pub provider: String,
    /// Set when the configured provider failed and the fallback answered.
    pub fallback_diagnostic: Option<String>,
}

/// Ranks `(key, text)` element pairs against the query, descending score,
/// ties broken by the elements' given (schema) order.
pub fn semantic_rank(
    elements: &[(String, String)],
    query: &str,
    provider: &dyn SimilarityProvider,
) -> Ranking {
    let texts: Vec<String> = elements.iter().map(|(_, t)| t.clone()).collect();
    let (scores, provider_name, fallback_diagnostic) = match provider.score(query, &texts) {
        Ok(s) if s.len() == texts.len() => (s, provider.name().to_string(), None),
        Ok(s) => {
            let diag = format!(
                "provider {} returned {} scores for {} elements; using fallback",
                provider.name(),
                s.len(),
                texts.len()
            );
            let fallback = TfCosineProvider;
            let s = fallback.score(query, &texts).expect("tf-cosine cannot fail");
            (s, fallback.name().to_string(), Some(diag))
        }
        Err(e) => {
            let diag = format!("provider {} failed: {e}; using fallback", provider.name());
            let fallback = TfCosineProvider;
            let s = fallback.score(query, &texts).expect("tf-cosine cannot fail");
            (s, fallback.name().to_string(), Some(diag))
        }
    };

    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    Ranking {
        ranked: order
            .into_iter()
            .map(|i| RankedElement { key: elements[i].0.clone(), score: scores[i] })
            .collect(),
        provider: provider_name,
        fallback_diagnostic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elems(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, t)| (k.to_string(), t.to_string())).collect()
    }

    #[test]
    fn exact_name_outranks_disjoint() {
        let elements = elems(&[
            ("items.velocity", "velocity measured speed"),
            ("items.label", "label site name"),
        ]);
        let ranking = semantic_rank(&elements, "average velocity of probes", &TfCosineProvider);
        assert_eq!(ranking.ranked[0].key, "items.velocity");
        assert!(ranking.ranked[0].score > ranking.ranked[1].score);
        assert_eq!(ranking.ranked[1].score, 0.0);
    }

    #[test]
    fn empty_candidates_rank_empty() {
        let ranking = semantic_rank(&[], "q", &TfCosineProvider);
        assert!(ranking.ranked.is_empty());
    }

    #[test]
    fn ties_break_by_given_order() {
        let elements = elems(&[("b.x", "zzz"), ("a.y", "zzz")]);
        let ranking = semantic_rank(&elements, "zzz", &TfCosineProvider);
        assert_eq!(ranking.ranked[0].key, "b.x");
        assert_eq!(ranking.ranked[1].key, "a.y");
        assert_eq!(ranking.ranked[0].score, ranking.ranked[1].score);
    }

    /// Independent oracle: cosine over hand-built term-frequency vectors.
    #[test]
    fn fallback_matches_tf_cosine_oracle() {
        let query = "total energy used in kwh per day";
        let elements = elems(&[
            ("usage.energy_kwh", "energy kwh consumed energy"),
            ("usage.day", "day of reading"),
            ("sites.name", "site name"),
        ]);
        let ranking = semantic_rank(&elements, query, &TfCosineProvider);

        let oracle = |a: &str, b: &str| -> f64 {
            use std::collections::HashMap;
            let count = |s: &str| {
                let mut m: HashMap<String, f64> = HashMap::new();
                for t in s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
                    *m.entry(t.to_ascii_lowercase()).or_default() += 1.0;
                }
                m
            };
            let (va, vb) = (count(a), count(b));
            let dot: f64 = va.iter().filter_map(|(k, x)| vb.get(k).map(|y| x * y)).sum();
            let na: f64 = va.values().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = vb.values().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 || dot == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        };
        for r in &ranking.ranked {
            let text = &elements.iter().find(|(k, _)| k == &r.key).unwrap().1;
            assert!((r.score - oracle(query, text)).abs() < 1e-12);
        }
    }

    struct Failing;
    impl SimilarityProvider for Failing {
        fn name(&self) -> &'static str {
            "failing"
        }
        fn score(&self, _q: &str, _e: &[String]) -> Result<Vec<f64>, String> {
            Err("connection refused".into())
        }
    }

    #[test]
    fn provider_failure_falls_back_with_diagnostic() {
        let elements = elems(&[("t.a", "alpha"), ("t.b", "beta")]);
        let ranking = semantic_rank(&elements, "alpha", &Failing);
        assert_eq!(ranking.provider, "tf-cosine");
        assert!(ranking.fallback_diagnostic.as_deref().unwrap().contains("failing"));
        assert_eq!(ranking.ranked[0].key, "t.a");
    }

    #[test]
    fn scores_bounded() {
        let elements = elems(&[("t.a", "alpha beta gamma"), ("t.b", "alpha")]);
        let ranking = semantic_rank(&elements, "alpha beta", &TfCosineProvider);
        for r in &ranking.ranked {
            assert!((0.0..=1.0).contains(&r.score));
        }
    }
}
