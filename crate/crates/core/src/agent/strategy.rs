//! Questioning strategies, registered by id.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::text::{belief_text, conversation_text, extract_question};
use super::{score_targets, Action, Agent, AgentError, QuestionTarget, SessionState};
use crate::templates::TemplateName;

/// Chooses the next action for a session.
pub trait Strategy: Send + Sync {
    fn id(&self) -> &str;

    fn select_action(&self, agent: &Agent, state: &SessionState) -> Result<Action, AgentError>;

    /// Whether rebuilt graphs are post-processed against answered targets.
    fn post_processes(&self) -> bool {
        false
    }
}

/// Asks about the highest-scoring target; generates once nothing is uncertain.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mhis;

impl Strategy for Mhis {
    fn id(&self) -> &str {
        "mhis"
    }

    fn select_action(&self, agent: &Agent, state: &SessionState) -> Result<Action, AgentError> {
        match score_targets(&state.graph).into_iter().next() {
            Some(top) if top.score > 0.0 => {
                let (question_text, choices) = agent.verbalize_hsa_question(&top.target, &state.graph)?;
                Ok(Action::AskQuestion { target: top.target, question_text, choices })
            }
            _ => Ok(Action::GenerateImage { prompt: state.merged_prompt.clone() }),
        }
    }

    fn post_processes(&self) -> bool {
        true
    }
}

/// Lets the model write its own question from the belief and the dialogue.
/// Falls back to [`Mhis`] when the model will not mark its question.
#[derive(Debug, Clone, Copy, Default)]
pub struct AicqBelief;

impl Strategy for AicqBelief {
    fn id(&self) -> &str {
        "aicq-b"
    }

    fn select_action(&self, agent: &Agent, state: &SessionState) -> Result<Action, AgentError> {
        let request = agent.templates().render(
            TemplateName::AicqBelief,
            &[
                ("user_prompt", &state.merged_prompt),
                ("belief", &belief_text(&state.graph)),
                ("conversation", &conversation_text(&state.history)),
            ],
        )?;
        match ask_with_markers(agent, &request) {
            Ok(question_text) => Ok(free_form(question_text)),
            Err(AgentError::MissingQuestionMarkers { attempts }) => {
                tracing::warn!(attempts, "no marked question; falling back to scored targets");
                Mhis.select_action(agent, state)
            }
            Err(e) => Err(e),
        }
    }

    fn post_processes(&self) -> bool {
        true
    }
}

/// Asks from the prompt and chat history alone, with no belief graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct AicqBase;

impl Strategy for AicqBase {
    fn id(&self) -> &str {
        "aicq-base"
    }

    fn select_action(&self, agent: &Agent, state: &SessionState) -> Result<Action, AgentError> {
        let history = conversation_text(&state.history);
        let request = if history.is_empty() {
            agent.templates().render(TemplateName::AicqBase, &[("original_prompt", &state.original_prompt)])?
        } else {
            let chat = format!("original prompt: {}\n{history}", state.original_prompt);
            agent.templates().render(TemplateName::AicqBaseFollowup, &[("chat_history", &chat)])?
        };
        Ok(free_form(ask_with_markers(agent, &request)?))
    }
}

/// Never asks; generates from the prompt as given.
#[derive(Debug, Clone, Copy, Default)]
pub struct T2iBaseline;

impl Strategy for T2iBaseline {
    fn id(&self) -> &str {
        "t2i-baseline"
    }

    fn select_action(&self, _agent: &Agent, state: &SessionState) -> Result<Action, AgentError> {
        Ok(Action::GenerateImage { prompt: state.merged_prompt.clone() })
    }
}

fn free_form(question_text: String) -> Action {
    Action::AskQuestion { target: QuestionTarget::FreeForm, question_text, choices: Vec::new() }
}

/// Completes `request` and extracts the marked question, re-asking once.
fn ask_with_markers(agent: &Agent, request: &str) -> Result<String, AgentError> {
    const ATTEMPTS: u32 = 2;
    let mut prompt = request.to_string();
    for _ in 0..ATTEMPTS {
        let text = agent.backends().llm.complete(&prompt)?;
        if let Some(q) = extract_question(&text) {
            return Ok(q);
        }
        prompt = format!("{request}\n\nRemember: put exactly one question between <question> and </question>.");
    }
    Err(AgentError::MissingQuestionMarkers { attempts: ATTEMPTS })
}

/// Strategies by id.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn Strategy>>,
}

impl fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.strategies.keys()).finish()
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `mhis`, `aicq-b`, `aicq-base` and `t2i-baseline`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Mhis));
        r.register(Arc::new(AicqBelief));
        r.register(Arc::new(AicqBase));
        r.register(Arc::new(T2iBaseline));
        r
    }

    pub fn register(&mut self, strategy: Arc<dyn Strategy>) {
        self.strategies.insert(strategy.id().to_string(), strategy);
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn Strategy>> {
        self.strategies.get(id).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }
}
