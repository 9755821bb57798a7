//! Folding observations back into the session.
//!
//! An answer is summarised into a sentence, merged into the prompt, and the
//! graph is rebuilt from the merged prompt. Strategies that track targets
//! then post-process the rebuilt graph so that answered targets stay
//! answered and nothing the re-parse forgot is lost.

use super::answers::{match_answer, parse_yes_no, AnswerMatch};
use super::{Action, Agent, AgentError, ConversationTurn, Observation, QuestionTarget, SessionState};
use crate::belief_graph::{
    apply_edit, collapse, name_key, Attribute, BeliefGraph, EntityType, GraphEdit, ImportanceScore, Probability,
    Relation, CandidateDistribution,
};

impl Agent {
    /// Applies one observation; always appends exactly one turn. Backend
    /// and parse trouble marks the turn degraded instead of failing.
    pub fn transition(
        &self,
        state: &SessionState,
        action: &Action,
        observation: &Observation,
    ) -> Result<SessionState, AgentError> {
        let mut next = state.clone();
        match (action, observation) {
            (Action::AskQuestion { question_text, .. }, Observation::AnswerText { text }) => {
                if text.trim().is_empty() {
                    return Err(AgentError::EmptyInput("answer"));
                }
                let post = self.strategy(&state.strategy)?.post_processes();
                let mut summary = String::new();
                let outcome = self.summarize_qa(question_text, text).and_then(|s| {
                    summary = s.clone();
                    let merged = self.merge_prompt(&state.merged_prompt, &s)?;
                    let graph = self.parser().build_belief_graph(&merged)?;
                    Ok((merged, graph))
                });
                let degraded = match outcome {
                    Ok((merged, graph)) => {
                        next.merged_prompt = merged;
                        next.graph = graph;
                        None
                    }
                    Err(e) if e.is_degradable() => {
                        tracing::warn!(error = %e, "turn degraded; keeping the previous graph");
                        Some(e.to_string())
                    }
                    Err(e) => return Err(e),
                };
                next.push_turn(action.clone(), observation.clone(), summary, degraded);
                if post {
                    next.graph = post_process(&next.graph, &next.history, &state.graph);
                    next.history.last_mut().expect("turn was just pushed").graph = next.graph.clone();
                }
            }
            (Action::PresentGraph { .. }, Observation::GraphEdit { edit }) => {
                return self.apply_edits(state, std::slice::from_ref(edit));
            }
            (_, Observation::NoOp) => next.push_turn(action.clone(), Observation::NoOp, String::new(), None),
            (a, o) => {
                return Err(AgentError::InvalidObservation(format!(
                    "{} cannot answer {}",
                    observation_kind(o),
                    action_kind(a)
                )))
            }
        }
        Ok(next)
    }

    /// Applies direct graph edits. The edits are merged into the prompt in
    /// one step; each edit gets its own turn. Any invalid edit rejects the
    /// whole batch and leaves the session unchanged.
    pub fn apply_edits(&self, state: &SessionState, edits: &[GraphEdit]) -> Result<SessionState, AgentError> {
        if edits.is_empty() {
            return Ok(state.clone());
        }
        let mut graph = state.graph.clone();
        let mut summaries = Vec::with_capacity(edits.len());
        for (index, edit) in edits.iter().enumerate() {
            summaries.push(edit.describe(&graph));
            graph = apply_edit(&graph, edit).map_err(|source| AgentError::InvalidEdit { index, source })?;
        }
        let mut next = state.clone();
        let presented = Action::PresentGraph { graph: state.graph.clone() };
        let degraded = match self.merge_prompt(&state.merged_prompt, &summaries.join(" ")) {
            Ok(merged) => {
                next.merged_prompt = merged;
                None
            }
            Err(e) if e.is_degradable() => Some(e.to_string()),
            Err(e) => return Err(e),
        };
        next.graph = graph;
        for (edit, summary) in edits.iter().zip(summaries) {
            next.push_turn(presented.clone(), Observation::GraphEdit { edit: edit.clone() }, summary, degraded.clone());
        }
        Ok(next)
    }
}

fn action_kind(a: &Action) -> &'static str {
    match a {
        Action::AskQuestion { .. } => "a question",
        Action::PresentGraph { .. } => "a presented graph",
        Action::GenerateImage { .. } => "image generation",
    }
}

fn observation_kind(o: &Observation) -> &'static str {
    match o {
        Observation::AnswerText { .. } => "a text answer",
        Observation::GraphEdit { .. } => "a graph edit",
        Observation::NoOp => "no-op",
    }
}

/// Makes a rebuilt graph consistent with everything already established.
///
/// Items of `old` missing from `new` are carried over, then every answered
/// target and edit in `history` is re-applied: answered values become point
/// masses with zero importance, denied entities get probability zero.
/// Applying it twice gives the same graph as applying it once.
pub fn post_process(new: &BeliefGraph, history: &[ConversationTurn], old: &BeliefGraph) -> BeliefGraph {
    let mut g = new.clone();
    retain(&mut g, old);
    for turn in history {
        match (&turn.action, &turn.observation) {
            (Action::AskQuestion { target, choices, .. }, Observation::AnswerText { text }) => {
                force_answer(&mut g, old, target, choices, text)
            }
            (_, Observation::GraphEdit { edit }) => force_edit(&mut g, edit),
            _ => {}
        }
    }
    g
}

fn find_relation<'a>(g: &'a mut BeliefGraph, like: &Relation) -> Option<&'a mut Relation> {
    let (name, ends) = (name_key(&like.name), like.endpoint_key());
    let by_name = g.relations.iter().position(|r| name_key(&r.name) == name);
    let index = by_name.or_else(|| g.relations.iter().position(|r| r.endpoint_key() == ends))?;
    Some(&mut g.relations[index])
}

fn retain(g: &mut BeliefGraph, old: &BeliefGraph) {
    for old_entity in &old.entities {
        match g.entity_mut(&old_entity.name) {
            None => g.entities.push(old_entity.clone()),
            Some(e) => {
                for a in &old_entity.attributes {
                    if e.attribute(&a.name).is_none() {
                        e.attributes.push(a.clone());
                    }
                }
            }
        }
    }
    for r in &old.relations {
        if find_relation(g, r).is_none() && g.entity(&r.entity_1).is_some() && g.entity(&r.entity_2).is_some() {
            g.relations.push(r.clone());
        }
    }
}

fn set_existence(g: &mut BeliefGraph, entity: &str, exists: bool) {
    if let Some(e) = g.entity_mut(entity) {
        if exists {
            e.prob_appearing = Probability::ONE;
            if e.entity_type == EntityType::Implicit {
                e.entity_type = EntityType::Explicit;
            }
        } else {
            e.prob_appearing = Probability::ZERO;
            e.importance = ImportanceScore::ZERO;
        }
    }
}

fn set_attribute(g: &mut BeliefGraph, entity: &str, attribute: &str, value: Option<&str>) {
    let Some(e) = g.entity_mut(entity) else { return };
    if e.attribute(attribute).is_none() {
        let Some(label) = value else { return };
        e.attributes.push(Attribute {
            name: attribute.to_string(),
            importance: ImportanceScore::ZERO,
            distribution: CandidateDistribution::point_mass(label.trim()),
        });
    }
    let a = e.attribute_mut(attribute).expect("attribute exists");
    if let Some(label) = value {
        a.distribution = collapse(&a.distribution, label);
    }
    a.importance = ImportanceScore::ZERO;
}

fn set_relation(g: &mut BeliefGraph, old: &BeliefGraph, relation: &str, value: Option<&str>) {
    let key = name_key(relation);
    let index = g.relations.iter().position(|r| name_key(&r.name) == key).or_else(|| {
        let ends = old.relation(relation)?.endpoint_key();
        g.relations.iter().position(|r| r.endpoint_key() == ends)
    });
    let Some(r) = index.map(|i| &mut g.relations[i]) else { return };
    if let Some(label) = value {
        r.spatial_distribution = collapse(&r.spatial_distribution, label);
    }
    r.importance = ImportanceScore::ZERO;
}

fn force_answer(g: &mut BeliefGraph, old: &BeliefGraph, target: &QuestionTarget, choices: &[String], answer: &str) {
    let value = match match_answer(answer, choices) {
        AnswerMatch::Choice(c) => Some(c),
        AnswerMatch::Other(o) => Some(o),
        // No usable value, but the target has been asked: stop asking it.
        AnswerMatch::Unknown => None,
    };
    match target {
        QuestionTarget::EntityExistence { entity } => match parse_yes_no(answer) {
            Some(exists) => set_existence(g, entity, exists),
            None => {
                if let Some(e) = g.entity_mut(entity) {
                    e.importance = ImportanceScore::ZERO;
                }
            }
        },
        QuestionTarget::AttributeValue { entity, attribute } => set_attribute(g, entity, attribute, value.as_deref()),
        QuestionTarget::RelationValue { relation } => set_relation(g, old, relation, value.as_deref()),
        QuestionTarget::FreeForm => {}
    }
}

fn force_edit(g: &mut BeliefGraph, edit: &GraphEdit) {
    match edit {
        GraphEdit::SetEntityExistence { entity, exists } => set_existence(g, entity, *exists),
        GraphEdit::ConfirmImplicit { entity } => set_existence(g, entity, true),
        GraphEdit::SetAttributeValue { entity, attribute, label } => set_attribute(g, entity, attribute, Some(label)),
        GraphEdit::SetRelationValue { relation, label } => {
            let old = g.clone();
            set_relation(g, &old, relation, Some(label));
        }
    }
}
