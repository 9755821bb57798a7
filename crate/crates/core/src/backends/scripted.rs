//! Deterministic test doubles for every backend.
//!
//! The scripted language model answers from an ordered rule file: the first
//! rule whose matchers all match (and none of whose `unless` patterns match)
//! wins, and its response is expanded with the capture groups of its first
//! matcher (`$1`, `${name}`). Rule files are TOML:
//!
//! ```toml
//! default_response = "I am not sure."
//!
//! [[rule]]
//! matcher = "entity: (\\w+)"
//! response = "You asked about $1."
//! ```

use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::Deserialize;

use super::{
    fnv1a, BackendConfig, BackendError, Backends, CompletionRequest, CompletionResponse, Embedder, EmbeddingVector,
    ImageArtifact, ImageGenerator, ImageScorer, LanguageModel, Llm,
};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    matcher: OneOrMany,
    #[serde(default)]
    unless: Vec<String>,
    response: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    default_response: String,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleRecord>,
}

#[derive(Debug)]
struct ScriptedRule {
    matchers: Vec<Regex>,
    unless: Vec<Regex>,
    response: String,
}

#[derive(Debug)]
pub struct ScriptedRuleSet {
    rules: Vec<ScriptedRule>,
    default_response: String,
}

impl ScriptedRuleSet {
    pub fn from_toml_str(text: &str) -> Result<Self, BackendError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| BackendError::Config(format!("rules: {e}")))?;
        let compile = |pattern: &str, index: usize| {
            Regex::new(pattern).map_err(|e| BackendError::Config(format!("rule {index}: {e}")))
        };
        let mut rules = Vec::with_capacity(file.rules.len());
        for (i, record) in file.rules.into_iter().enumerate() {
            let patterns = match record.matcher {
                OneOrMany::One(p) => vec![p],
                OneOrMany::Many(ps) => ps,
            };
            if patterns.is_empty() {
                return Err(BackendError::Config(format!("rule {i}: empty matcher list")));
            }
            rules.push(ScriptedRule {
                matchers: patterns.iter().map(|p| compile(p, i)).collect::<Result<_, _>>()?,
                unless: record.unless.iter().map(|p| compile(p, i)).collect::<Result<_, _>>()?,
                response: record.response,
            });
        }
        Ok(Self { rules, default_response: file.default_response })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading rules {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Response for a request text; a pure function of `text`.
    pub fn respond(&self, text: &str) -> String {
        for rule in &self.rules {
            if rule.unless.iter().any(|r| r.is_match(text)) {
                continue;
            }
            let Some(caps) = rule.matchers[0].captures(text) else { continue };
            if !rule.matchers[1..].iter().all(|r| r.is_match(text)) {
                continue;
            }
            let mut out = String::new();
            caps.expand(&rule.response, &mut out);
            return out;
        }
        self.default_response.clone()
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedLanguageModel {
    rules: Arc<ScriptedRuleSet>,
}

impl ScriptedLanguageModel {
    pub fn new(rules: Arc<ScriptedRuleSet>) -> Self {
        Self { rules }
    }
}

impl LanguageModel for ScriptedLanguageModel {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        Ok(CompletionResponse { text: self.rules.respond(&request.prompt_text), backend_id: "scripted".into() })
    }
}

pub const EMBEDDING_DIM: usize = 256;

/// Hashed bag-of-words embedding, L2-normalised.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEmbedder;

impl Embedder for ScriptedEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let mut values = vec![0.0; EMBEDDING_DIM];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[(h % EMBEDDING_DIM as u64) as usize] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::new(values)
    }
}

/// Stub image generator. With a non-zero `detail_dropout` it leaves out some
/// prompt sentences per seed, the way real generators ignore details.
#[derive(Debug, Clone, Default)]
pub struct ScriptedImageGenerator {
    pub detail_dropout: f64,
    pub blocked_terms: Vec<String>,
}

impl ScriptedImageGenerator {
    fn depicted(&self, prompt: &str, seed: u64) -> String {
        if self.detail_dropout <= 0.0 {
            return prompt.to_string();
        }
        let sentences = split_sentences(prompt);
        let kept: Vec<&str> = sentences
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                let h = fnv1a(format!("{seed}:{i}:{s}").as_bytes());
                *i == 0 || (h % 10_000) as f64 / 10_000.0 >= self.detail_dropout
            })
            .map(|(_, s)| *s)
            .collect();
        kept.join(". ")
    }
}

impl ImageGenerator for ScriptedImageGenerator {
    fn generate_image(&self, prompt: &str, seed: u64) -> Result<ImageArtifact, BackendError> {
        let lower = prompt.to_lowercase();
        if let Some(term) = self.blocked_terms.iter().find(|t| lower.contains(&t.to_lowercase())) {
            return Err(BackendError::ContentBlocked(format!("prompt mentions {term:?}")));
        }
        let id = format!("img-{:016x}", fnv1a(format!("{seed}\u{0}{prompt}").as_bytes()));
        Ok(ImageArtifact {
            content_ref: format!("scripted://{id}"),
            id,
            prompt_used: self.depicted(prompt, seed),
            seed,
        })
    }
}

/// Scores 1.0 when the question's key phrase appears in the image prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedScorer;

impl ImageScorer for ScriptedScorer {
    fn score_image(&self, image: &ImageArtifact, question: &str) -> Result<f64, BackendError> {
        let phrase = key_phrase(question).to_lowercase();
        Ok(if !phrase.is_empty() && image.prompt_used.to_lowercase().contains(&phrase) { 1.0 } else { 0.0 })
    }
}

/// The phrase a yes/no question asks about: a quoted span if present,
/// otherwise the text after the last colon, otherwise the whole question.
pub fn key_phrase(question: &str) -> &str {
    let q = question.trim();
    for quote in ['"', '\''] {
        if let Some(start) = q.find(quote) {
            if let Some(len) = q[start + 1..].find(quote) {
                return q[start + 1..start + 1 + len].trim();
            }
        }
    }
    let tail = q.rsplit_once(':').map_or(q, |(_, t)| t);
    tail.trim().trim_end_matches('?').trim().trim_end_matches('.').trim()
}

pub(crate) fn split_sentences(text: &str) -> Vec<&str> {
    text.split(". ")
        .map(|s| s.trim().trim_end_matches('.').trim())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Factory for the `scripted` backend profile.
pub fn build_backends(config: &BackendConfig) -> Result<Backends, BackendError> {
    let path = config
        .scripted
        .rules
        .as_deref()
        .ok_or_else(|| BackendError::Config("scripted backend needs a rules file".into()))?;
    let rules = Arc::new(ScriptedRuleSet::load(path)?);
    Ok(Backends {
        llm: Llm::new(Arc::new(ScriptedLanguageModel::new(rules)), config.llm.clone()),
        embedder: Arc::new(ScriptedEmbedder),
        images: Arc::new(ScriptedImageGenerator {
            detail_dropout: config.scripted.detail_dropout,
            blocked_terms: config.scripted.blocked_terms.clone(),
        }),
        scorer: Some(Arc::new(ScriptedScorer)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: &str = r#"
default_response = "no idea"

[[rule]]
matcher = ["entity: (\\w+)", "list"]
unless = ["skip me"]
response = "fixed list for $1"

[[rule]]
matcher = "entity"
response = "plain"
"#;

    #[test]
    fn first_matching_rule_wins() {
        let rules = ScriptedRuleSet::from_toml_str(RULES).unwrap();
        assert_eq!(rules.respond("please list entity: rabbit"), "fixed list for rabbit");
        assert_eq!(rules.respond("entity: rabbit"), "plain");
        assert_eq!(rules.respond("list entity: rabbit, skip me"), "plain");
        assert_eq!(rules.respond("nothing here"), "no idea");
    }

    #[test]
    fn bad_pattern_is_a_config_error() {
        let err = ScriptedRuleSet::from_toml_str("[[rule]]\nmatcher = \"(\"\nresponse = \"x\"\n").unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));
    }

    #[test]
    fn embedding_is_deterministic() {
        let e = ScriptedEmbedder;
        let a = e.embed("a white rabbit").unwrap();
        assert_eq!(a, e.embed("a white rabbit").unwrap());
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.dimension(), EMBEDDING_DIM);
    }

    #[test]
    fn stub_images_are_stable_per_prompt_and_seed() {
        let g = ScriptedImageGenerator::default();
        let a = g.generate_image("a red mug", 3).unwrap();
        assert_eq!(a, g.generate_image("a red mug", 3).unwrap());
        assert_ne!(a.id, g.generate_image("a red mug", 4).unwrap().id);
        assert_eq!(a.prompt_used, "a red mug");
    }

    #[test]
    fn blocked_terms_are_refused() {
        let g = ScriptedImageGenerator { blocked_terms: vec!["gore".into()], ..Default::default() };
        assert!(matches!(g.generate_image("Gore scene", 1), Err(BackendError::ContentBlocked(_))));
    }

    #[test]
    fn scorer_checks_key_phrase() {
        let img = ScriptedImageGenerator::default().generate_image("a red mug on a table", 0).unwrap();
        assert_eq!(ScriptedScorer.score_image(&img, "Is there a 'red mug'?").unwrap(), 1.0);
        assert_eq!(ScriptedScorer.score_image(&img, "Does the image show: a blue mug?").unwrap(), 0.0);
        assert_eq!(key_phrase("Does the image show: the rabbit is white?"), "the rabbit is white");
    }

    #[test]
    fn dropout_keeps_first_sentence() {
        let g = ScriptedImageGenerator { detail_dropout: 0.99, ..Default::default() };
        let img = g.generate_image("a rabbit. the rabbit is white. the cat is black.", 7).unwrap();
        assert!(img.prompt_used.starts_with("a rabbit"));
        assert!(img.prompt_used.len() < "a rabbit. the rabbit is white. the cat is black.".len());
    }
}
