//! Ten MHIS turns on a scripted fixture: every answered target collapses,
//! and no answered target is ever selected again.

mod common;

use std::collections::HashSet;

use belief_agent_core::agent::{score_targets, Action, Observation, QuestionTarget};
use belief_agent_core::belief_graph::BeliefGraph;
use belief_agent_core::simulator::SimulatedUser;

fn settled(graph: &BeliefGraph, target: &QuestionTarget) -> Result<(), String> {
    match target {
        QuestionTarget::AttributeValue { entity, attribute } => {
            let a = graph.entity(entity).and_then(|e| e.attribute(attribute)).ok_or("attribute vanished")?;
            if !a.distribution.is_point_mass() || a.importance.value() != 0.0 {
                return Err(format!("{entity}.{attribute} not settled: {a:?}"));
            }
        }
        QuestionTarget::RelationValue { relation } => {
            let r = graph.relation(relation).ok_or("relation vanished")?;
            if !r.spatial_distribution.is_point_mass() || r.importance.value() != 0.0 {
                return Err(format!("{relation} not settled: {r:?}"));
            }
        }
        QuestionTarget::EntityExistence { entity } => {
            // A confirmed entity keeps its importance, which still weights its
            // attribute questions; the existence question itself scores zero.
            let e = graph.entity(entity).ok_or("entity vanished")?;
            let p = e.prob_appearing.value();
            let score = score_targets(graph).into_iter().find(|s| &s.target == target).unwrap().score;
            if !(p == 0.0 || p == 1.0) || score != 0.0 || (p == 0.0 && e.importance.value() != 0.0) {
                return Err(format!("{entity} not settled: {e:?}"));
            }
        }
        QuestionTarget::FreeForm => return Err("MHIS never asks free-form questions".into()),
    }
    Ok(())
}

#[test]
fn ten_turn_mhis_session() {
    let agent = common::agent();
    let manifest = common::manifest();
    let mut asked_total = 0;
    for case in &manifest.cases {
        let user = SimulatedUser::with_graph(&case.ground_truth_caption, case.ground_truth_graph.clone());
        let mut state = agent.start_session(&case.starting_prompt, "mhis").unwrap();
        let mut answered: Vec<QuestionTarget> = Vec::new();
        for _ in 0..10 {
            let action = agent.select_action(&state).unwrap();
            let observation = match &action {
                Action::AskQuestion { target, question_text, .. } => {
                    assert!(!answered.contains(target), "{}: {target:?} asked again", case.case_id);
                    Observation::AnswerText { text: user.answer_question(&agent, question_text, &state.history).unwrap() }
                }
                _ => Observation::NoOp,
            };
            state = agent.transition(&state, &action, &observation).unwrap();
            assert!(state.last_turn().unwrap().degraded.is_none());
            if let Action::AskQuestion { target, .. } = action {
                answered.push(target);
            }
            for t in &answered {
                settled(&state.graph, t).unwrap_or_else(|e| panic!("{}: {e}", case.case_id));
            }
        }
        let distinct: HashSet<_> = answered.iter().collect();
        assert_eq!(distinct.len(), answered.len());
        asked_total += answered.len();
    }
    assert_eq!(asked_total, 4 + 5 + 4 + 6 + 4);
}
