use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

pub const ENV_BASE_URL: &str = "BELIEF_AGENT_BASE_URL";
pub const ENV_API_KEY_NAME: &str = "BELIEF_AGENT_API_KEY_ENV";
pub const ENV_SCORER_URL: &str = "BELIEF_AGENT_SCORER_URL";
pub const ENV_RULES: &str = "BELIEF_AGENT_RULES";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Character proxy for the model context window.
    pub context_budget_chars: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        // ~32K tokens at a conservative 3 characters per token.
        Self { temperature: 1.0, max_output_tokens: 2048, context_budget_chars: 96_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay_ms: 500, max_delay_ms: 8_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based), doubling each time.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedConfig {
    /// Rules file; required for the scripted language model.
    pub rules: Option<PathBuf>,
    /// Fraction of prompt sentences the stub image generator leaves out,
    /// simulating a generator that ignores details.
    pub detail_dropout: f64,
    /// Prompts containing any of these terms are refused as blocked content.
    pub blocked_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub image_model: String,
    pub scorer_url: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: None,
            api_key_env: "BELIEF_AGENT_API_KEY".into(),
            chat_model: "gemini-1.5-pro".into(),
            embedding_model: "text-embedding-004".into(),
            image_model: "imagen-3.0-generate-001".into(),
            scorer_url: None,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub llm: LlmSettings,
    pub scripted: ScriptedConfig,
    pub remote: RemoteConfig,
}

impl BackendConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BackendError> {
        toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Overlays values from environment variables, looked up through `var`.
    pub fn apply_env(mut self, var: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(url) = var(ENV_BASE_URL) {
            self.remote.base_url = Some(url);
        }
        if let Some(name) = var(ENV_API_KEY_NAME) {
            self.remote.api_key_env = name;
        }
        if let Some(url) = var(ENV_SCORER_URL) {
            self.remote.scorer_url = Some(url);
        }
        if let Some(rules) = var(ENV_RULES) {
            self.scripted.rules = Some(PathBuf::from(rules));
        }
        self
    }
}
