//! Builds belief graphs from prompts with three language-model passes:
//! entities, then attributes per entity, then relations.
//!
//! Model output goes through [`extract_document`] and a typed conversion.
//! When the output cannot be used the request is repeated once with the
//! problem appended, and after that the stage fails with
//! [`ParseError::ParseFailure`]. The entity stage is mandatory; a failed
//! attribute or relation pass leaves that part of the graph empty and is
//! recorded in the notes.

mod convert;
mod extract;

use std::sync::Arc;

use thiserror::Error;

use crate::backends::{BackendError, Llm};
use crate::belief_graph::{
    name_key, validate, BeliefGraph, Entity, EntityType, ImportanceScore, Probability, Violation,
};
use crate::templates::{TemplateError, TemplateName, TemplateSet};

pub use extract::{extract_document, RawParseResult};

/// Name of the background entity every graph carries.
pub const IMAGE_STYLE: &str = "image style";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no document found: {0}")]
    NoDocumentFound(String),
    #[error("could not parse {stage} after {attempts} attempt(s): {reason}")]
    ParseFailure { stage: String, attempts: u32, reason: String },
    #[error("parsed graph is invalid: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// A parsed graph with the repairs made along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGraph {
    pub graph: BeliefGraph,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BeliefParser {
    llm: Llm,
    templates: Arc<TemplateSet>,
    max_repairs: u32,
}

impl BeliefParser {
    pub fn new(llm: Llm, templates: Arc<TemplateSet>) -> Self {
        Self { llm, templates, max_repairs: 1 }
    }

    /// Number of re-prompts after an unusable response.
    pub fn with_max_repairs(mut self, max_repairs: u32) -> Self {
        self.max_repairs = max_repairs;
        self
    }

    pub fn build_belief_graph(&self, prompt: &str) -> Result<BeliefGraph, ParseError> {
        Ok(self.build_with_notes(prompt)?.graph)
    }

    pub fn build_with_notes(&self, prompt: &str) -> Result<ParsedGraph, ParseError> {
        if prompt.trim().is_empty() {
            return Err(ParseError::EmptyPrompt);
        }
        let mut notes = Vec::new();
        let mut entities = self.parse_entities(prompt, &mut notes)?;
        if !entities.iter().any(|e| name_key(&e.name) == IMAGE_STYLE) {
            notes.push(format!("added missing {IMAGE_STYLE:?} entity"));
            entities.push(Entity::new(
                IMAGE_STYLE,
                "the style of the image",
                EntityType::Background,
                Probability::ONE,
                ImportanceScore::ONE,
            ));
        }

        // Most important entities first, so budget trouble hits the least important.
        let mut order: Vec<usize> = (0..entities.len()).collect();
        order.sort_by(|&a, &b| entities[b].importance.value().total_cmp(&entities[a].importance.value()));
        for i in order {
            if entities[i].prob_appearing == Probability::ZERO {
                continue;
            }
            let others: Vec<String> =
                entities.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, e)| e.name.clone()).collect();
            match self.parse_attributes(prompt, &entities[i].name, &others, &mut notes) {
                Ok(attrs) => entities[i].attributes = attrs,
                Err(e @ (ParseError::ParseFailure { .. } | ParseError::Backend(BackendError::ContextBudgetExceeded { .. }))) => {
                    notes.push(format!("no attributes for {}: {e}", entities[i].name));
                }
                Err(e) => return Err(e),
            }
        }

        let relations = if entities.len() >= 2 {
            match self.parse_relations(prompt, &entities, &mut notes) {
                Ok(r) => r,
                Err(e @ (ParseError::ParseFailure { .. } | ParseError::Backend(BackendError::ContextBudgetExceeded { .. }))) => {
                    notes.push(format!("no relations: {e}"));
                    Vec::new()
                }
                Err(e) => return Err(e),
            }
        } else {
            Vec::new()
        };

        let graph = BeliefGraph { source_prompt: prompt.to_string(), entities, relations };
        let violations = validate(&graph);
        if !violations.is_empty() {
            return Err(ParseError::InvalidGraph(violations));
        }
        for note in &notes {
            tracing::debug!(note, "parser repair");
        }
        Ok(ParsedGraph { graph, notes })
    }

    fn parse_entities(&self, prompt: &str, notes: &mut Vec<String>) -> Result<Vec<Entity>, ParseError> {
        let request = self.templates.render(TemplateName::Entity, &[("user_prompt", &json_text(prompt))])?;
        self.with_repairs("entities", &request, notes, convert::entities)
    }

    fn parse_attributes(
        &self,
        prompt: &str,
        entity: &str,
        others: &[String],
        notes: &mut Vec<String>,
    ) -> Result<Vec<crate::belief_graph::Attribute>, ParseError> {
        let existing = others.join(", ");
        let request = self.templates.render(
            TemplateName::Attribute,
            &[("user_prompt", &json_text(prompt)), ("entity", &json_text(entity)), ("existing_entities", &json_text(&existing))],
        )?;
        self.with_repairs(&format!("attributes of {entity}"), &request, notes, |doc, notes| {
            convert::attributes(doc, entity, others, notes)
        })
    }

    fn parse_relations(
        &self,
        prompt: &str,
        entities: &[Entity],
        notes: &mut Vec<String>,
    ) -> Result<Vec<crate::belief_graph::Relation>, ParseError> {
        let names: Vec<&str> = entities.iter().map(|e| e.name.as_str()).collect();
        let names = serde_json::to_string(&names).expect("names serialize");
        let request = self
            .templates
            .render(TemplateName::Relation, &[("user_prompt", &json_text(prompt)), ("entity_names", &names)])?;
        self.with_repairs("relations", &request, notes, |doc, notes| convert::relations(doc, entities, notes))
    }

    /// Runs `request`, re-prompting with the problem appended while the
    /// response cannot be extracted or converted.
    fn with_repairs<T>(
        &self,
        stage: &str,
        request: &str,
        notes: &mut Vec<String>,
        convert: impl Fn(serde_json::Value, &mut Vec<String>) -> Result<T, convert::ShapeError>,
    ) -> Result<T, ParseError> {
        let attempts = self.max_repairs + 1;
        let mut prompt = request.to_string();
        let mut reason = String::new();
        for attempt in 1..=attempts {
            let text = self.llm.complete(&prompt)?;
            let mut local = Vec::new();
            let outcome = extract_document(&text)
                .map_err(|e| e.to_string())
                .and_then(|raw| {
                    local.extend(raw.repair_notes.iter().map(|n| format!("{stage}: {n}")));
                    convert(raw.extracted_document, &mut local).map_err(|e| e.to_string())
                });
            match outcome {
                Ok(value) => {
                    notes.extend(local);
                    if attempt > 1 {
                        notes.push(format!("{stage}: usable after {attempt} attempts"));
                    }
                    return Ok(value);
                }
                Err(e) => {
                    tracing::debug!(stage, attempt, error = %e, "unusable parser output");
                    reason = e;
                    prompt = format!(
                        "{request}\n\nYour previous answer could not be used ({reason}). \
                         Answer again with only the JSON list, strictly following the format."
                    );
                }
            }
        }
        Err(ParseError::ParseFailure { stage: stage.to_string(), attempts, reason })
    }
}

/// `text` escaped for embedding inside a JSON string literal.
fn json_text(text: &str) -> String {
    let quoted = serde_json::to_string(text.trim()).expect("strings serialize");
    quoted[1..quoted.len() - 1].to_string()
}
