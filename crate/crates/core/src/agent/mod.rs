//! The interactive agent: a session state, a strategy that picks the next
//! action, and a transition that folds the user's reply back into the
//! prompt and the belief graph.
//!
//! Strategies are looked up by id in a [`StrategyRegistry`], so new
//! questioning policies plug in without touching the session machinery.

mod answers;
mod scoring;
mod strategy;
mod text;
mod transition;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends};
use crate::belief_graph::{BeliefGraph, EntityType, GraphError};
use crate::parsing::{BeliefParser, ParseError};
use crate::templates::{TemplateError, TemplateName, TemplateSet};

pub use answers::{match_answer, parse_yes_no, AnswerMatch};
pub use scoring::{score_targets, ScoredCandidateQuestion};
pub use strategy::{AicqBase, AicqBelief, Mhis, Strategy, StrategyRegistry, T2iBaseline};
pub use text::{belief_text, conversation_text, extract_question};
pub use transition::post_process;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("observation does not fit the action: {0}")]
    InvalidObservation(String),
    #[error("edit {index} is invalid: {source}")]
    InvalidEdit { index: usize, source: GraphError },
    #[error("model response had no question markers after {attempts} attempt(s)")]
    MissingQuestionMarkers { attempts: u32 },
    #[error("{0}")]
    EmptyResponse(&'static str),
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
}

impl AgentError {
    /// Errors that should degrade a turn rather than abort the session.
    pub fn is_degradable(&self) -> bool {
        matches!(
            self,
            AgentError::Parse(_)
                | AgentError::Backend(_)
                | AgentError::MissingQuestionMarkers { .. }
                | AgentError::EmptyResponse(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuestionTarget {
    EntityExistence { entity: String },
    AttributeValue { entity: String, attribute: String },
    RelationValue { relation: String },
    FreeForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    AskQuestion {
        target: QuestionTarget,
        question_text: String,
        #[serde(default)]
        choices: Vec<String>,
    },
    PresentGraph { graph: BeliefGraph },
    GenerateImage { prompt: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    AnswerText { text: String },
    GraphEdit { edit: crate::belief_graph::GraphEdit },
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub index: usize,
    pub action: Action,
    pub observation: Observation,
    #[serde(default)]
    pub declarative_summary: String,
    /// Why the turn could not be fully applied, if it could not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
    /// Merged prompt after this turn.
    pub merged_prompt: String,
    /// Belief graph after this turn.
    pub graph: BeliefGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub original_prompt: String,
    pub merged_prompt: String,
    pub graph: BeliefGraph,
    #[serde(default)]
    pub history: Vec<ConversationTurn>,
    pub strategy: String,
}

impl SessionState {
    pub fn last_turn(&self) -> Option<&ConversationTurn> {
        self.history.last()
    }

    /// Number of question turns so far.
    pub fn questions_asked(&self) -> usize {
        self.history.iter().filter(|t| matches!(t.action, Action::AskQuestion { .. })).count()
    }

    fn push_turn(&mut self, action: Action, observation: Observation, summary: String, degraded: Option<String>) {
        self.history.push(ConversationTurn {
            index: self.history.len(),
            action,
            observation,
            declarative_summary: summary,
            degraded,
            merged_prompt: self.merged_prompt.clone(),
            graph: self.graph.clone(),
        });
    }
}

/// Backends, templates and strategies: everything a session needs.
#[derive(Clone)]
pub struct Agent {
    backends: Backends,
    templates: Arc<TemplateSet>,
    parser: BeliefParser,
    strategies: Arc<StrategyRegistry>,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent").field("backends", &self.backends).field("strategies", &self.strategies).finish()
    }
}

impl Agent {
    pub fn new(backends: Backends, templates: Arc<TemplateSet>) -> Self {
        let parser = BeliefParser::new(backends.llm.clone(), templates.clone());
        Self { backends, templates, parser, strategies: Arc::new(StrategyRegistry::with_defaults()) }
    }

    pub fn with_strategies(mut self, strategies: StrategyRegistry) -> Self {
        self.strategies = Arc::new(strategies);
        self
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn parser(&self) -> &BeliefParser {
        &self.parser
    }

    pub fn strategies(&self) -> &StrategyRegistry {
        &self.strategies
    }

    pub fn strategy(&self, id: &str) -> Result<Arc<dyn Strategy>, AgentError> {
        self.strategies.get(id).ok_or_else(|| AgentError::UnknownStrategy(id.to_string()))
    }

    /// Parses the prompt into the initial belief graph.
    pub fn start_session(&self, prompt: &str, strategy: &str) -> Result<SessionState, AgentError> {
        self.strategy(strategy)?;
        let prompt = prompt.trim();
        if prompt.is_empty() {
            return Err(AgentError::EmptyInput("prompt"));
        }
        let graph = self.parser.build_belief_graph(prompt)?;
        Ok(SessionState {
            original_prompt: prompt.to_string(),
            merged_prompt: prompt.to_string(),
            graph,
            history: Vec::new(),
            strategy: strategy.to_string(),
        })
    }

    pub fn select_action(&self, state: &SessionState) -> Result<Action, AgentError> {
        self.strategy(&state.strategy)?.select_action(self, state)
    }

    /// One declarative sentence stating what an answer says.
    pub fn summarize_qa(&self, question: &str, answer: &str) -> Result<String, AgentError> {
        if question.trim().is_empty() {
            return Err(AgentError::EmptyInput("question"));
        }
        if answer.trim().is_empty() {
            return Err(AgentError::EmptyInput("answer"));
        }
        let request =
            self.templates.render(TemplateName::QaSummarize, &[("question", question.trim()), ("answer", answer.trim())])?;
        let summary = self.backends.llm.complete(&request)?;
        single_paragraph(&summary).ok_or(AgentError::EmptyResponse("summary was empty"))
    }

    /// Rewrites `prompt` to include `info`.
    pub fn merge_prompt(&self, prompt: &str, info: &str) -> Result<String, AgentError> {
        if prompt.trim().is_empty() {
            return Err(AgentError::EmptyInput("prompt"));
        }
        if info.trim().is_empty() {
            return Err(AgentError::EmptyInput("additional information"));
        }
        let request =
            self.templates.render(TemplateName::Merge, &[("prompt", prompt.trim()), ("additional_info", info.trim())])?;
        let merged = self.backends.llm.complete(&request)?;
        single_paragraph(&merged).ok_or(AgentError::EmptyResponse("merged prompt was empty"))
    }

    /// Question text and options for a scored target.
    pub fn verbalize_hsa_question(
        &self,
        target: &QuestionTarget,
        graph: &BeliefGraph,
    ) -> Result<(String, Vec<String>), AgentError> {
        let unknown = |what: String| AgentError::InvalidObservation(format!("no such target {what}"));
        let (entity, attribute, choices, entity_type) = match target {
            QuestionTarget::EntityExistence { entity } => {
                let e = graph.entity(entity).ok_or_else(|| unknown(entity.clone()))?;
                (e.name.clone(), "existence".to_string(), vec!["yes".to_string(), "no".to_string()], "implicit")
            }
            QuestionTarget::AttributeValue { entity, attribute } => {
                let e = graph.entity(entity).ok_or_else(|| unknown(entity.clone()))?;
                let a = e.attribute(attribute).ok_or_else(|| unknown(format!("{entity}.{attribute}")))?;
                let kind = match e.entity_type {
                    EntityType::Background => "background",
                    EntityType::Explicit | EntityType::Implicit => "explicit",
                };
                let choices = a.distribution.ranked().into_iter().map(|c| c.label.clone()).collect();
                (e.name.clone(), a.name.clone(), choices, kind)
            }
            QuestionTarget::RelationValue { relation } => {
                let r = graph.relation(relation).ok_or_else(|| unknown(relation.clone()))?;
                let choices = r.spatial_distribution.ranked().into_iter().map(|c| c.label.clone()).collect();
                (r.name.clone(), "spatial relation".to_string(), choices, "relation")
            }
            QuestionTarget::FreeForm => {
                return Err(AgentError::InvalidObservation("free-form targets are not verbalised".into()))
            }
        };
        let request = self.templates.render(
            TemplateName::HsaQuestion,
            &[
                ("entity", &entity),
                ("attribute", &attribute),
                ("candidates", &choices.join(", ")),
                ("entity_type", entity_type),
            ],
        )?;
        let text = self.backends.llm.complete(&request)?;
        let text = single_paragraph(&text).ok_or(AgentError::EmptyResponse("question was empty"))?;
        let text = strip_prefix_ci(&text, "question:").to_string();
        if text.is_empty() {
            return Err(AgentError::EmptyResponse("question was empty"));
        }
        Ok((text, choices))
    }
}

/// Whitespace-collapsed text, or `None` when blank.
fn single_paragraph(text: &str) -> Option<String> {
    let t = text.split_whitespace().collect::<Vec<_>>().join(" ");
    (!t.is_empty()).then_some(t)
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> &'a str {
    match text.get(..prefix.len()) {
        Some(head) if head.eq_ignore_ascii_case(prefix) => text[prefix.len()..].trim(),
        _ => text,
    }
}
