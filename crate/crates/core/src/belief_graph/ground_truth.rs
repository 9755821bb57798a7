use serde::{Deserialize, Serialize};

use super::{
    Attribute, BeliefGraph, CandidateDistribution, Entity, EntityType, GraphError, ImportanceScore, Probability,
    Relation,
};

/// Entities at or above this appearance probability count as present.
pub const EXISTENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthAttribute {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEntity {
    pub name: String,
    pub exists: bool,
    #[serde(default)]
    pub attributes: Vec<GroundTruthAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRelation {
    pub name: String,
    pub entity_1: String,
    pub entity_2: String,
    pub spatial_value: String,
}

/// The facts of a target image: a belief graph without uncertainty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruthState {
    pub entities: Vec<GroundTruthEntity>,
    pub relations: Vec<GroundTruthRelation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Shared maxima are an error.
    Error,
    /// Shared maxima resolve to the first-listed candidate.
    FirstListed,
}

pub fn to_ground_truth(graph: &BeliefGraph, ties: TieBreak) -> Result<GroundTruthState, GraphError> {
    let pick = |dist: &CandidateDistribution, location: String| -> Result<String, GraphError> {
        let best = match ties {
            TieBreak::Error => dist.argmax_unique(),
            TieBreak::FirstListed => dist.argmax_first(),
        };
        best.map(|c| c.label.clone()).ok_or(GraphError::AmbiguousArgmax(location))
    };

    let mut entities = Vec::with_capacity(graph.entities.len());
    for e in &graph.entities {
        let mut attributes = Vec::with_capacity(e.attributes.len());
        for a in &e.attributes {
            let value = pick(&a.distribution, format!("{}.{}", e.name, a.name))?;
            attributes.push(GroundTruthAttribute { name: a.name.clone(), value });
        }
        entities.push(GroundTruthEntity {
            name: e.name.clone(),
            exists: e.prob_appearing.value() >= EXISTENCE_THRESHOLD,
            attributes,
        });
    }
    let mut relations = Vec::with_capacity(graph.relations.len());
    for r in &graph.relations {
        relations.push(GroundTruthRelation {
            name: r.name.clone(),
            entity_1: r.entity_1.clone(),
            entity_2: r.entity_2.clone(),
            spatial_value: pick(&r.spatial_distribution, r.name.clone())?,
        });
    }
    Ok(GroundTruthState { entities, relations })
}

impl GroundTruthState {
    /// The degenerate belief graph holding exactly these facts.
    pub fn to_belief_graph(&self, source_prompt: impl Into<String>) -> BeliefGraph {
        let mut g = BeliefGraph::new(source_prompt);
        for e in &self.entities {
            let p = if e.exists { Probability::ONE } else { Probability::ZERO };
            let mut entity = Entity::new(e.name.clone(), "", EntityType::Explicit, p, ImportanceScore::ZERO);
            entity.attributes = e
                .attributes
                .iter()
                .map(|a| Attribute {
                    name: a.name.clone(),
                    importance: ImportanceScore::ZERO,
                    distribution: CandidateDistribution::point_mass(a.value.clone()),
                })
                .collect();
            g.entities.push(entity);
        }
        for r in &self.relations {
            g.relations.push(Relation {
                name: r.name.clone(),
                description: String::new(),
                spatial_distribution: CandidateDistribution::point_mass(r.spatial_value.clone()),
                importance: ImportanceScore::ZERO,
                entity_1: r.entity_1.clone(),
                entity_2: r.entity_2.clone(),
                is_bidirectional: false,
            });
        }
        g
    }
}
