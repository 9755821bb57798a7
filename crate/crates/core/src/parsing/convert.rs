//! Typed conversion of extracted documents into graph parts.
//!
//! Shape errors (missing fields, wrong types) are reported with their path so
//! the caller can re-prompt. Value problems that have an unambiguous fix are
//! repaired in place and noted: out-of-range numbers are clamped, weights are
//! renormalised, duplicates merged and dangling references dropped.

use std::collections::HashSet;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer};
use serde_json::Value;

use crate::belief_graph::{
    name_key, Attribute, CandidateDistribution, Entity, EntityType, ImportanceScore, Probability, Relation,
    SUM_TOLERANCE,
};

/// A shape error at a document path.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ShapeError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            f.write_str(&self.message)
        } else {
            write!(f, "at {}: {}", self.path, self.message)
        }
    }
}

/// Ordered label/weight pairs as they appear in the document.
#[derive(Debug, Clone, PartialEq, Default)]
struct RawDistribution(Vec<(String, f64)>);

impl<'de> Deserialize<'de> for RawDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = RawDistribution;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from candidate values to probabilities")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, f64>()? {
                    pairs.push((k, v));
                }
                Ok(RawDistribution(pairs))
            }
        }
        deserializer.deserialize_map(V)
    }
}

#[derive(Debug, Deserialize)]
struct RawEntity {
    name: String,
    importance_to_ask_score: f64,
    #[serde(default)]
    description: String,
    entity_type: String,
    probability_of_appearing: f64,
}

#[derive(Debug, Deserialize)]
struct RawAttribute {
    name: String,
    importance_to_ask_score: f64,
    candidates: RawDistribution,
}

#[derive(Debug, Deserialize)]
struct RawRelation {
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    spatial_relation: RawDistribution,
    importance_to_ask_score: f64,
    name_entity_1: String,
    name_entity_2: String,
    #[serde(default)]
    is_bidirectional: bool,
}

fn typed_list<T: for<'de> Deserialize<'de>>(doc: Value, notes: &mut Vec<String>) -> Result<Vec<T>, ShapeError> {
    let list = match doc {
        Value::Array(_) => doc,
        Value::Object(map) => {
            let mut arrays = map.into_iter().filter(|(_, v)| v.is_array());
            match (arrays.next(), arrays.next()) {
                (Some((key, v)), None) => {
                    notes.push(format!("unwrapped list from field {key:?}"));
                    v
                }
                _ => return Err(ShapeError { path: String::new(), message: "expected a list".into() }),
            }
        }
        _ => return Err(ShapeError { path: String::new(), message: "expected a list".into() }),
    };
    serde_path_to_error::deserialize(list)
        .map_err(|e| ShapeError { path: e.path().to_string(), message: e.inner().to_string() })
}

fn unit(value: f64, what: &str, notes: &mut Vec<String>) -> f64 {
    let clamped = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
    if clamped != value {
        notes.push(format!("clamped {what} from {value} to {clamped}"));
    }
    clamped
}

/// Cleans raw weights into a distribution, or `None` when nothing usable is left.
fn distribution(
    raw: RawDistribution,
    excluded: &HashSet<String>,
    what: &str,
    notes: &mut Vec<String>,
) -> Option<CandidateDistribution> {
    let mut pairs: Vec<(String, f64)> = Vec::new();
    for (label, weight) in raw.0 {
        let label = label.trim().to_string();
        if label.is_empty() {
            notes.push(format!("dropped empty candidate of {what}"));
            continue;
        }
        let weight = if weight < 0.0 {
            notes.push(format!("clamped negative weight of {what}.{label} to 0"));
            0.0
        } else {
            weight
        };
        match pairs.iter_mut().find(|(l, _)| name_key(l) == name_key(&label)) {
            Some((_, w)) => {
                notes.push(format!("merged duplicate candidate {label:?} of {what}"));
                *w += weight;
            }
            None => pairs.push((label, weight)),
        }
    }
    if pairs.iter().any(|(l, _)| excluded.contains(&name_key(l))) && pairs.iter().any(|(l, _)| !excluded.contains(&name_key(l))) {
        pairs.retain(|(l, _)| {
            let keep = !excluded.contains(&name_key(l));
            if !keep {
                notes.push(format!("dropped candidate {l:?} of {what}: it names another entity"));
            }
            keep
        });
    }
    if pairs.is_empty() {
        notes.push(format!("dropped {what}: no candidates"));
        return None;
    }
    let total: f64 = pairs.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        notes.push(format!("all weights of {what} were zero; using a uniform distribution"));
        return CandidateDistribution::uniform(pairs.into_iter().map(|(l, _)| l)).ok();
    }
    if (total - 1.0).abs() > SUM_TOLERANCE {
        notes.push(format!("normalised {what} (sum was {total})"));
    }
    CandidateDistribution::from_weights(pairs).ok()
}

pub(crate) fn entities(doc: Value, notes: &mut Vec<String>) -> Result<Vec<Entity>, ShapeError> {
    let raw: Vec<RawEntity> = typed_list(doc, notes)?;
    let mut out: Vec<Entity> = Vec::new();
    for (i, r) in raw.into_iter().enumerate() {
        let name = r.name.trim().to_string();
        if name.is_empty() {
            notes.push(format!("dropped entity {i}: empty name"));
            continue;
        }
        let entity_type = match name_key(&r.entity_type).as_str() {
            "explicit" => EntityType::Explicit,
            "implicit" => EntityType::Implicit,
            "background" => EntityType::Background,
            other => {
                return Err(ShapeError {
                    path: format!("[{i}].entity_type"),
                    message: format!("{other:?} is not one of explicit, implicit, background"),
                })
            }
        };
        let importance = unit(r.importance_to_ask_score, &format!("importance of {name}"), notes);
        let prob = unit(r.probability_of_appearing, &format!("probability of {name}"), notes);
        let entity = Entity::new(
            name.clone(),
            r.description.trim(),
            entity_type,
            Probability::clamped(prob).0,
            ImportanceScore::clamped(importance).0,
        );
        match out.iter_mut().find(|e| name_key(&e.name) == name_key(&name)) {
            Some(existing) => {
                notes.push(format!("merged duplicate entity {name:?}"));
                let description = merge_descriptions(&existing.description, &entity.description);
                if entity.importance.value() > existing.importance.value() {
                    *existing = entity;
                }
                existing.description = description;
            }
            None => out.push(entity),
        }
    }
    Ok(out)
}

fn merge_descriptions(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ if name_key(a) == name_key(b) => a.to_string(),
        _ => format!("{a}; {b}"),
    }
}

/// Attributes for `entity`; `others` are the names of every other entity.
pub(crate) fn attributes(
    doc: Value,
    entity: &str,
    others: &[String],
    notes: &mut Vec<String>,
) -> Result<Vec<Attribute>, ShapeError> {
    let raw: Vec<RawAttribute> = typed_list(doc, notes)?;
    let excluded: HashSet<String> = others.iter().map(|o| name_key(o)).collect();
    let mut out: Vec<Attribute> = Vec::new();
    for r in raw {
        let name = r.name.trim().to_string();
        let what = format!("{entity}.{name}");
        if name.is_empty() {
            notes.push(format!("dropped attribute of {entity}: empty name"));
            continue;
        }
        if excluded.contains(&name_key(&name)) {
            notes.push(format!("dropped attribute {what}: it is another entity"));
            continue;
        }
        if out.iter().any(|a| name_key(&a.name) == name_key(&name)) {
            notes.push(format!("dropped duplicate attribute {what}"));
            continue;
        }
        let importance = unit(r.importance_to_ask_score, &format!("importance of {what}"), notes);
        if let Some(distribution) = distribution(r.candidates, &excluded, &what, notes) {
            out.push(Attribute { name, importance: ImportanceScore::clamped(importance).0, distribution });
        }
    }
    Ok(out)
}

pub(crate) fn relations(doc: Value, entities: &[Entity], notes: &mut Vec<String>) -> Result<Vec<Relation>, ShapeError> {
    let raw: Vec<RawRelation> = typed_list(doc, notes)?;
    let resolve = |n: &str| entities.iter().find(|e| name_key(&e.name) == name_key(n)).map(|e| e.name.clone());
    let mut out: Vec<Relation> = Vec::new();
    for (i, r) in raw.into_iter().enumerate() {
        let (Some(e1), Some(e2)) = (resolve(&r.name_entity_1), resolve(&r.name_entity_2)) else {
            notes.push(format!(
                "dropped relation {i} ({} / {}): unknown entity",
                r.name_entity_1.trim(),
                r.name_entity_2.trim()
            ));
            continue;
        };
        if name_key(&e1) == name_key(&e2) {
            notes.push(format!("dropped relation {i}: {e1} relates to itself"));
            continue;
        }
        let name = match r.name.trim() {
            "" => format!("{e1}-{e2}"),
            n => n.to_string(),
        };
        let importance = unit(r.importance_to_ask_score, &format!("importance of relation {name}"), notes);
        let Some(spatial) = distribution(r.spatial_relation, &HashSet::new(), &format!("relation {name}"), notes)
        else {
            continue;
        };
        let relation = Relation {
            name,
            description: r.description.trim().to_string(),
            spatial_distribution: spatial,
            importance: ImportanceScore::clamped(importance).0,
            entity_1: e1,
            entity_2: e2,
            is_bidirectional: r.is_bidirectional,
        };
        let key = (relation.endpoint_key(), name_key(&relation.name));
        if out.iter().any(|o| (o.endpoint_key(), name_key(&o.name)) == key) {
            notes.push(format!("dropped duplicate relation {}", relation.name));
            continue;
        }
        out.push(relation);
    }
    Ok(out)
}
