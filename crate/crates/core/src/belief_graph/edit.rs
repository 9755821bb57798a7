use serde::{Deserialize, Serialize};

use super::{BeliefGraph, CandidateDistribution, EntityType, GraphError, ImportanceScore, Probability};

/// A direct user manipulation of the belief graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphEdit {
    SetEntityExistence { entity: String, exists: bool },
    SetAttributeValue { entity: String, attribute: String, label: String },
    SetRelationValue { relation: String, label: String },
    ConfirmImplicit { entity: String },
}

impl GraphEdit {
    /// Declarative sentence describing the edit, for merging into the prompt.
    pub fn describe(&self, graph: &BeliefGraph) -> String {
        match self {
            GraphEdit::SetEntityExistence { entity, exists: true } | GraphEdit::ConfirmImplicit { entity } => {
                format!("there is a {entity} in the image.")
            }
            GraphEdit::SetEntityExistence { entity, exists: false } => format!("there is no {entity} in the image."),
            GraphEdit::SetAttributeValue { entity, attribute, label } => {
                format!("the {attribute} of the {entity} is {label}.")
            }
            GraphEdit::SetRelationValue { relation, label } => match graph.relation(relation) {
                Some(r) => format!("the {} is {label} the {}.", r.entity_1, r.entity_2),
                None => format!("the {relation} relation is {label}."),
            },
        }
    }
}

/// Applies one edit, returning the updated graph.
pub fn apply_edit(graph: &BeliefGraph, edit: &GraphEdit) -> Result<BeliefGraph, GraphError> {
    let mut g = graph.clone();
    match edit {
        GraphEdit::SetEntityExistence { entity, exists } => {
            let e = g.entity_mut(entity).ok_or_else(|| GraphError::UnknownTarget(format!("entity {entity}")))?;
            e.prob_appearing = if *exists { Probability::ONE } else { Probability::ZERO };
            e.importance = ImportanceScore::ZERO;
        }
        GraphEdit::SetAttributeValue { entity, attribute, label } => {
            let a = g
                .entity_mut(entity)
                .and_then(|e| e.attribute_mut(attribute))
                .ok_or_else(|| GraphError::UnknownTarget(format!("attribute {entity}.{attribute}")))?;
            a.distribution = collapse(&a.distribution, label);
            a.importance = ImportanceScore::ZERO;
        }
        GraphEdit::SetRelationValue { relation, label } => {
            let r = g
                .relation_mut(relation)
                .ok_or_else(|| GraphError::UnknownTarget(format!("relation {relation}")))?;
            r.spatial_distribution = collapse(&r.spatial_distribution, label);
            r.importance = ImportanceScore::ZERO;
        }
        GraphEdit::ConfirmImplicit { entity } => {
            let e = g.entity_mut(entity).ok_or_else(|| GraphError::UnknownTarget(format!("entity {entity}")))?;
            if e.entity_type == EntityType::Implicit {
                e.entity_type = EntityType::Explicit;
            }
            e.prob_appearing = Probability::ONE;
        }
    }
    Ok(g)
}

/// Point mass on `label`, reusing the existing spelling when the label is already a candidate.
pub(crate) fn collapse(dist: &CandidateDistribution, label: &str) -> CandidateDistribution {
    match dist.find(label) {
        Some(c) => CandidateDistribution::point_mass(c.label.clone()),
        None => CandidateDistribution::point_mass(label.trim()),
    }
}
