//! The agent's belief about the image to generate.
//!
//! A [`BeliefGraph`] holds entities (explicit, implicit or background), each
//! with an appearance probability, an importance-to-ask score and a list of
//! attributes carrying candidate distributions. Relations connect two
//! entities and carry a distribution over spatial values.
//!
//! Graphs are plain values: every operation here returns a new graph.

mod distribution;
mod document;
mod edit;
mod ground_truth;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distribution::{Candidate, CandidateDistribution, ImportanceScore, Probability, SUM_TOLERANCE};
pub use document::{deserialize, serialize, serialize_pretty};
pub use edit::{apply_edit, GraphEdit};
pub(crate) use edit::collapse;
pub use ground_truth::{
    to_ground_truth, GroundTruthAttribute, GroundTruthEntity, GroundTruthRelation, GroundTruthState, TieBreak,
    EXISTENCE_THRESHOLD,
};
pub use validate::{validate, Violation, ViolationKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("value {value} is outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("invalid candidate weight {value}")]
    InvalidWeight { value: f64 },
    #[error("distribution has no candidates")]
    EmptyDistribution,
    #[error("every candidate has probability zero")]
    AllZero,
    #[error("candidate probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("duplicate candidate label {0:?}")]
    DuplicateLabel(String),
    #[error("unknown edit target: {0}")]
    UnknownTarget(String),
    #[error("no unique most likely value for {0}")]
    AmbiguousArgmax(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

/// Comparison key for names and labels: trimmed and lowercased.
pub fn name_key(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Natural-log entropy of a distribution; zero-probability terms are skipped.
pub fn entropy(dist: &CandidateDistribution) -> f64 {
    dist.candidates()
        .iter()
        .map(|c| c.prob.value())
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Entropy of a single yes/no event with probability `p`.
pub fn bernoulli_entropy(p: Probability) -> f64 {
    let p = p.value();
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Explicit,
    Implicit,
    Background,
}

impl EntityType {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Explicit => "explicit",
            EntityType::Implicit => "implicit",
            EntityType::Background => "background",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "importance_to_ask_score")]
    pub importance: ImportanceScore,
    #[serde(rename = "candidates")]
    pub distribution: CandidateDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    #[serde(rename = "importance_to_ask_score")]
    pub importance: ImportanceScore,
    #[serde(default)]
    pub description: String,
    pub entity_type: EntityType,
    #[serde(rename = "probability_of_appearing")]
    pub prob_appearing: Probability,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
}

impl Entity {
    /// Builds an entity, zeroing importance when the entity cannot appear.
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        entity_type: EntityType,
        prob_appearing: Probability,
        importance: ImportanceScore,
    ) -> Self {
        let importance = if prob_appearing == Probability::ZERO { ImportanceScore::ZERO } else { importance };
        Self {
            name: name.into(),
            importance,
            description: description.into(),
            entity_type,
            prob_appearing,
            attributes: Vec::new(),
        }
    }

    pub fn with_attribute(mut self, attribute: Attribute) -> Self {
        self.attributes.push(attribute);
        self
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        let key = name_key(name);
        self.attributes.iter().find(|a| name_key(&a.name) == key)
    }

    pub fn attribute_mut(&mut self, name: &str) -> Option<&mut Attribute> {
        let key = name_key(name);
        self.attributes.iter_mut().find(|a| name_key(&a.name) == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "spatial_relation")]
    pub spatial_distribution: CandidateDistribution,
    #[serde(rename = "importance_to_ask_score")]
    pub importance: ImportanceScore,
    #[serde(rename = "name_entity_1")]
    pub entity_1: String,
    #[serde(rename = "name_entity_2")]
    pub entity_2: String,
    #[serde(default)]
    pub is_bidirectional: bool,
}

impl Relation {
    /// Unordered endpoint key, used to detect duplicate relations.
    pub fn endpoint_key(&self) -> (String, String) {
        let (a, b) = (name_key(&self.entity_1), name_key(&self.entity_2));
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeliefGraph {
    #[serde(default)]
    pub source_prompt: String,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

impl BeliefGraph {
    pub fn new(source_prompt: impl Into<String>) -> Self {
        Self { source_prompt: source_prompt.into(), ..Self::default() }
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        let key = name_key(name);
        self.entities.iter().find(|e| name_key(&e.name) == key)
    }

    pub fn entity_mut(&mut self, name: &str) -> Option<&mut Entity> {
        let key = name_key(name);
        self.entities.iter_mut().find(|e| name_key(&e.name) == key)
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        let key = name_key(name);
        self.relations.iter().find(|r| name_key(&r.name) == key)
    }

    pub fn relation_mut(&mut self, name: &str) -> Option<&mut Relation> {
        let key = name_key(name);
        self.relations.iter_mut().find(|r| name_key(&r.name) == key)
    }

    /// Probability that a relation matters at all: both endpoints must appear.
    pub fn relation_probability(&self, relation: &Relation) -> f64 {
        let p = |n: &str| self.entity(n).map_or(0.0, |e| e.prob_appearing.value());
        p(&relation.entity_1) * p(&relation.entity_2)
    }

    /// Sum of every attribute, relation and entity-existence entropy term.
    pub fn total_entropy(&self) -> f64 {
        let entities: f64 = self
            .entities
            .iter()
            .map(|e| bernoulli_entropy(e.prob_appearing) + e.attributes.iter().map(|a| entropy(&a.distribution)).sum::<f64>())
            .sum();
        let relations: f64 = self.relations.iter().map(|r| entropy(&r.spatial_distribution)).sum();
        entities + relations
    }
}
