//! HTTP backends speaking the OpenAI-compatible wire format
//! (`/chat/completions`, `/embeddings`, `/images/generations`), plus a
//! generic JSON scorer endpoint. Requests are retried with exponential
//! backoff on timeouts, rate limits and 5xx responses.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::config::RemoteConfig;
use super::{
    BackendConfig, BackendError, Backends, CompletionRequest, CompletionResponse, Embedder, EmbeddingVector,
    ImageArtifact, ImageGenerator, ImageScorer, LanguageModel, Llm,
};

#[derive(Debug, Clone)]
struct HttpJson {
    client: Client,
    api_key: Option<String>,
    config: RemoteConfig,
}

impl HttpJson {
    fn new(config: &RemoteConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { client, api_key, config: config.clone() })
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let policy = &self.config.retry;
        let attempts = policy.max_attempts.max(1);
        let mut last = BackendError::Unavailable("no attempt made".into());
        for attempt in 1..=attempts {
            match self.post_once(url, body, attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    tracing::warn!(%url, attempt, error = %e, "retrying backend request");
                    std::thread::sleep(policy.delay(attempt));
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn post_once(&self, url: &str, body: &Value, attempt: u32) -> Result<Value, BackendError> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout { attempts: attempt }
            } else {
                BackendError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::RateLimited { attempts: attempt });
        }
        if status.is_server_error() {
            return Err(BackendError::Unavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            if text.contains("content_policy") || text.contains("safety") || text.contains("blocked") {
                return Err(BackendError::ContentBlocked(text));
            }
            return Err(BackendError::InvalidRequest(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }

    fn url(&self, path: &str) -> Result<String, BackendError> {
        let base = self
            .config
            .base_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("remote base URL is not set".into()))?;
        Ok(format!("{}/{}", base.trim_end_matches('/'), path))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteLanguageModel {
    http: HttpJson,
}

impl LanguageModel for RemoteLanguageModel {
    fn id(&self) -> &str {
        &self.http.config.chat_model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = json!({
            "model": self.http.config.chat_model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let v = self.http.post(&self.http.url("chat/completions")?, &body)?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
        Ok(CompletionResponse { text: text.to_string(), backend_id: self.http.config.chat_model.clone() })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    http: HttpJson,
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let body = json!({"model": self.http.config.embedding_model, "input": text});
        let v = self.http.post(&self.http.url("embeddings")?, &body)?;
        let values = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::MalformedResponse("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| BackendError::MalformedResponse("non-numeric embedding".into())))
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingVector::new(values)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteImageGenerator {
    http: HttpJson,
}

impl ImageGenerator for RemoteImageGenerator {
    fn generate_image(&self, prompt: &str, seed: u64) -> Result<ImageArtifact, BackendError> {
        let body = json!({"model": self.http.config.image_model, "prompt": prompt, "n": 1, "seed": seed});
        let v = self.http.post(&self.http.url("images/generations")?, &body)?;
        let content_ref = if let Some(url) = v.pointer("/data/0/url").and_then(Value::as_str) {
            url.to_string()
        } else if let Some(b64) = v.pointer("/data/0/b64_json").and_then(Value::as_str) {
            format!("data:image/png;base64,{b64}")
        } else {
            return Err(BackendError::MalformedResponse("missing data[0].url or b64_json".into()));
        };
        let id = format!("img-{:016x}", super::fnv1a(format!("{seed}\u{0}{prompt}").as_bytes()));
        Ok(ImageArtifact { id, prompt_used: prompt.to_string(), seed, content_ref })
    }
}

/// Scorer service: `POST {scorer_url}` with `{"image": ref, "question": q}`
/// returning `{"score": x}`; optional `{"reference": ref}` requests return
/// `{"similarity": x}`.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    http: HttpJson,
    url: String,
}

impl ImageScorer for RemoteScorer {
    fn score_image(&self, image: &ImageArtifact, question: &str) -> Result<f64, BackendError> {
        let v = self.http.post(&self.url, &json!({"image": image.content_ref, "question": question}))?;
        let s = v
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| BackendError::MalformedResponse("missing score".into()))?;
        Ok(s.clamp(0.0, 1.0))
    }

    fn image_similarity(&self, image: &ImageArtifact, reference: &str) -> Result<Option<f64>, BackendError> {
        let v = self.http.post(&self.url, &json!({"image": image.content_ref, "reference": reference}))?;
        Ok(v.get("similarity").and_then(Value::as_f64))
    }
}

/// Factory for the `remote` backend profile. Fails with a configuration
/// error when the base URL or the API key variable is missing.
pub fn build_backends(config: &BackendConfig) -> Result<Backends, BackendError> {
    build_with_env(config, |k| std::env::var(k).ok())
}

pub fn build_with_env(config: &BackendConfig, var: impl Fn(&str) -> Option<String>) -> Result<Backends, BackendError> {
    let remote = &config.remote;
    if remote.base_url.is_none() {
        return Err(BackendError::Config(format!(
            "remote backend needs a base URL (set {} or remote.base_url)",
            super::config::ENV_BASE_URL
        )));
    }
    let key = var(&remote.api_key_env)
        .ok_or_else(|| BackendError::Config(format!("API key variable {} is not set", remote.api_key_env)))?;
    let http = HttpJson::new(remote, Some(key))?;
    let scorer: Option<Arc<dyn ImageScorer>> = remote
        .scorer_url
        .clone()
        .map(|url| Arc::new(RemoteScorer { http: http.clone(), url }) as Arc<dyn ImageScorer>);
    Ok(Backends {
        llm: Llm::new(Arc::new(RemoteLanguageModel { http: http.clone() }), config.llm.clone()),
        embedder: Arc::new(RemoteEmbedder { http: http.clone() }),
        images: Arc::new(RemoteImageGenerator { http }),
        scorer,
    })
}
