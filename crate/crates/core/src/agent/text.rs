//! Plain-text renderings of beliefs and dialogues for prompt templates.

use std::fmt::Write;
use std::sync::LazyLock;

use regex::Regex;

use super::{Action, ConversationTurn, Observation};
use crate::belief_graph::{BeliefGraph, CandidateDistribution};

fn candidates(dist: &CandidateDistribution) -> String {
    let parts: Vec<String> = dist.candidates().iter().map(|c| format!("{}: {}", c.label, c.prob.value())).collect();
    format!("[{}]", parts.join(", "))
}

/// One line per entity, attribute and relation.
pub fn belief_text(graph: &BeliefGraph) -> String {
    let mut out = String::new();
    for e in &graph.entities {
        let _ = writeln!(
            out,
            "Entity Name: {}, Description: {}, Importance to ask Score: {}, Probability of appearing: {}",
            e.name,
            e.description,
            e.importance.value(),
            e.prob_appearing.value()
        );
        for a in &e.attributes {
            let _ = writeln!(
                out,
                "  Attribute Name: {}, Importance to ask Score: {}, Candidates: {}",
                a.name,
                a.importance.value(),
                candidates(&a.distribution)
            );
        }
    }
    for r in &graph.relations {
        let _ = writeln!(
            out,
            "Relation Name: {}, Description: {}, Importance to ask Score: {}, Entities: {}, {}, Candidates: {}",
            r.name,
            r.description,
            r.importance.value(),
            r.entity_1,
            r.entity_2,
            candidates(&r.spatial_distribution)
        );
    }
    out.trim_end().to_string()
}

/// The question/answer exchanges and edits so far, one line per utterance.
pub fn conversation_text(history: &[ConversationTurn]) -> String {
    let mut lines = Vec::new();
    for turn in history {
        match (&turn.action, &turn.observation) {
            (Action::AskQuestion { question_text, .. }, Observation::AnswerText { text }) => {
                lines.push(format!("agent: {question_text}"));
                lines.push(format!("user: {text}"));
            }
            (_, Observation::GraphEdit { .. }) if !turn.declarative_summary.is_empty() => {
                lines.push(format!("user edit: {}", turn.declarative_summary));
            }
            _ => {}
        }
    }
    lines.join("\n")
}

/// Text between the first `<question>` and the following `</question>`.
pub fn extract_question(text: &str) -> Option<String> {
    static MARKERS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<question>(.*?)</question>").unwrap());
    let inner = MARKERS.captures(text)?.get(1)?.as_str();
    let q = inner.split_whitespace().collect::<Vec<_>>().join(" ");
    (!q.is_empty()).then_some(q)
}
