use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{name_key, BeliefGraph, CandidateDistribution, ImportanceScore, Probability, SUM_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyName,
    DuplicateEntityName,
    DuplicateAttributeName,
    EmptyDistribution,
    DuplicateCandidateLabel { label: String },
    DistributionNotNormalized { sum: f64 },
    ImportanceWithoutExistence,
    DanglingRelationEndpoint { endpoint: String },
    SelfRelation,
    DuplicateRelation,
}

/// A broken invariant, located by a dotted path such as `entity[fork].attribute[color]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}", self.location, self.kind)
    }
}

/// Lists every broken graph invariant; an empty list means the graph is valid.
pub fn validate(graph: &BeliefGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, kind| out.push(Violation { location, kind });

    let mut entity_names = HashSet::new();
    for entity in &graph.entities {
        let loc = format!("entity[{}]", entity.name);
        if entity.name.trim().is_empty() {
            push(loc.clone(), ViolationKind::EmptyName);
        }
        if !entity_names.insert(name_key(&entity.name)) {
            push(loc.clone(), ViolationKind::DuplicateEntityName);
        }
        if entity.prob_appearing == Probability::ZERO && entity.importance != ImportanceScore::ZERO {
            push(loc.clone(), ViolationKind::ImportanceWithoutExistence);
        }
        let mut attribute_names = HashSet::new();
        for attribute in &entity.attributes {
            let aloc = format!("{loc}.attribute[{}]", attribute.name);
            if attribute.name.trim().is_empty() {
                push(aloc.clone(), ViolationKind::EmptyName);
            }
            if !attribute_names.insert(name_key(&attribute.name)) {
                push(aloc.clone(), ViolationKind::DuplicateAttributeName);
            }
            for kind in distribution_violations(&attribute.distribution) {
                push(aloc.clone(), kind);
            }
        }
    }

    let mut relation_keys = HashSet::new();
    for relation in &graph.relations {
        let loc = format!("relation[{}]", relation.name);
        if relation.name.trim().is_empty() {
            push(loc.clone(), ViolationKind::EmptyName);
        }
        for endpoint in [&relation.entity_1, &relation.entity_2] {
            if !entity_names.contains(&name_key(endpoint)) {
                push(loc.clone(), ViolationKind::DanglingRelationEndpoint { endpoint: endpoint.clone() });
            }
        }
        if name_key(&relation.entity_1) == name_key(&relation.entity_2) {
            push(loc.clone(), ViolationKind::SelfRelation);
        }
        let (a, b) = relation.endpoint_key();
        if !relation_keys.insert((a, b, name_key(&relation.name))) {
            push(loc.clone(), ViolationKind::DuplicateRelation);
        }
        for kind in distribution_violations(&relation.spatial_distribution) {
            push(loc.clone(), kind);
        }
    }
    out
}

fn distribution_violations(dist: &CandidateDistribution) -> Vec<ViolationKind> {
    let mut v = Vec::new();
    if dist.is_empty() {
        v.push(ViolationKind::EmptyDistribution);
        return v;
    }
    if let Some(label) = dist.duplicate_label() {
        v.push(ViolationKind::DuplicateCandidateLabel { label: label.to_string() });
    }
    let sum = dist.sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        v.push(ViolationKind::DistributionNotNormalized { sum });
    }
    v
}
