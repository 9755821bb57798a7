//! Pluggable model backends: text completion, embeddings, image generation
//! and image scoring.
//!
//! Every backend is a trait object so that a session can run against the
//! deterministic [`scripted`] doubles or a [`remote`] provider without any
//! change to the agent. Backends are chosen by profile name through
//! [`BackendRegistry`].

pub mod config;
pub mod remote;
pub mod scripted;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BackendConfig, LlmSettings, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("content blocked: {0}")]
    ContentBlocked(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("prompt of {len} chars exceeds the context budget of {budget}")]
    ContextBudgetExceeded { len: usize, budget: usize },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Timeout { .. } | BackendError::RateLimited { .. } | BackendError::Unavailable(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, BackendError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::MalformedResponse("embedding must be non-empty and finite".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = other.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(-1.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageArtifact {
    pub id: String,
    /// Prompt text the image depicts.
    pub prompt_used: String,
    pub seed: u64,
    /// Opaque handle: a path, URL or data URI. Never decoded here.
    pub content_ref: String,
}

pub trait LanguageModel: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError>;
}

pub trait ImageGenerator: Send + Sync {
    fn generate_image(&self, prompt: &str, seed: u64) -> Result<ImageArtifact, BackendError>;
}

/// Scores how well an image answers a yes/no question, in `[0, 1]`.
pub trait ImageScorer: Send + Sync {
    fn score_image(&self, image: &ImageArtifact, question: &str) -> Result<f64, BackendError>;

    /// Image-to-image similarity against a reference image, when supported.
    fn image_similarity(&self, _image: &ImageArtifact, _reference: &str) -> Result<Option<f64>, BackendError> {
        Ok(None)
    }
}

/// Language model handle that applies the configured sampling settings and
/// the context budget guard before dispatch.
#[derive(Clone)]
pub struct Llm {
    model: Arc<dyn LanguageModel>,
    settings: LlmSettings,
}

impl fmt::Debug for Llm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Llm").field("model", &self.model.id()).field("settings", &self.settings).finish()
    }
}

impl Llm {
    pub fn new(model: Arc<dyn LanguageModel>, settings: LlmSettings) -> Self {
        Self { model, settings }
    }

    pub fn id(&self) -> &str {
        self.model.id()
    }

    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.complete_with(prompt, self.settings.temperature)
    }

    pub fn complete_with(&self, prompt: &str, temperature: f64) -> Result<String, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompt text is empty".into()));
        }
        let len = prompt.chars().count();
        if len > self.settings.context_budget_chars {
            return Err(BackendError::ContextBudgetExceeded { len, budget: self.settings.context_budget_chars });
        }
        let request = CompletionRequest {
            prompt_text: prompt.to_string(),
            temperature,
            max_output_tokens: self.settings.max_output_tokens,
        };
        Ok(self.model.complete(&request)?.text)
    }
}

/// Everything the agent and evaluator need to talk to models.
#[derive(Clone)]
pub struct Backends {
    pub llm: Llm,
    pub embedder: Arc<dyn Embedder>,
    pub images: Arc<dyn ImageGenerator>,
    pub scorer: Option<Arc<dyn ImageScorer>>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends").field("llm", &self.llm).field("scorer", &self.scorer.is_some()).finish()
    }
}

impl Backends {
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("text to embed is empty".into()));
        }
        self.embedder.embed(text)
    }

    pub fn generate_image(&self, prompt: &str, seed: u64) -> Result<ImageArtifact, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("image prompt is empty".into()));
        }
        self.images.generate_image(prompt, seed)
    }
}

type BackendFactory = Box<dyn Fn(&BackendConfig) -> Result<Backends, BackendError> + Send + Sync>;

/// Backend profiles registered by name.
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// Registry with the `scripted` and `remote` profiles.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("scripted", scripted::build_backends);
        r.register("remote", remote::build_backends);
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&BackendConfig) -> Result<Backends, BackendError> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, profile: &str, config: &BackendConfig) -> Result<Backends, BackendError> {
        let factory = self
            .factories
            .get(profile)
            .ok_or_else(|| BackendError::Config(format!("unknown backend profile {profile:?}")))?;
        factory(config)
    }
}

/// 64-bit FNV-1a; stable across platforms and runs.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl LanguageModel for Echo {
        fn id(&self) -> &str {
            "echo"
        }
        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
            Ok(CompletionResponse { text: request.prompt_text.clone(), backend_id: "echo".into() })
        }
    }

    #[test]
    fn context_budget_guard_rejects_before_dispatch() {
        let llm = Llm::new(Arc::new(Echo), LlmSettings { context_budget_chars: 10, ..LlmSettings::default() });
        assert_eq!(llm.complete("short").unwrap(), "short");
        assert_eq!(
            llm.complete("this prompt is too long").unwrap_err(),
            BackendError::ContextBudgetExceeded { len: 23, budget: 10 }
        );
        assert!(matches!(llm.complete("  "), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::new(vec![0.0, 3.0]).unwrap();
        assert_eq!(a.cosine(&b), 0.0);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_profile_is_a_config_error() {
        let err = BackendRegistry::with_defaults().build("nope", &BackendConfig::default()).unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
