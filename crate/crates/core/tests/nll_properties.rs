//! Negative log-likelihood against ground truth derived from random beliefs.

mod common;

use belief_agent_core::belief_graph::{
    apply_edit, BeliefGraph, GraphEdit, GroundTruthAttribute, GroundTruthEntity, GroundTruthRelation, GroundTruthState,
};
use belief_agent_core::metrics::nll;
use proptest::prelude::*;

/// A truth every fact of which the belief gives probability of at least 1e-4.
fn truth_for(g: &BeliefGraph, picks: &[u8]) -> GroundTruthState {
    let mut pick = picks.iter().cycle().map(|p| *p as usize);
    let mut choose = |d: &belief_agent_core::belief_graph::CandidateDistribution| {
        let ok: Vec<_> = d.candidates().iter().filter(|c| c.prob.value() >= 1e-4).collect();
        ok[pick.next().unwrap() % ok.len()].label.clone()
    };
    let entities = g
        .entities
        .iter()
        .map(|e| GroundTruthEntity {
            name: e.name.clone(),
            exists: e.prob_appearing.value() >= 0.5,
            attributes: e
                .attributes
                .iter()
                .map(|a| GroundTruthAttribute { name: a.name.clone(), value: choose(&a.distribution) })
                .collect(),
        })
        .collect();
    let relations = g
        .relations
        .iter()
        .map(|r| GroundTruthRelation {
            name: r.name.clone(),
            entity_1: r.entity_1.clone(),
            entity_2: r.entity_2.clone(),
            spatial_value: choose(&r.spatial_distribution),
        })
        .collect();
    GroundTruthState { entities, relations }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn collapsing_to_truth_removes_exactly_its_term(
        g in common::gen::graph(),
        picks in proptest::collection::vec(any::<u8>(), 1..8),
        which in any::<prop::sample::Index>(),
    ) {
        let truth = truth_for(&g, &picks);
        let before = nll(&g, &truth);
        prop_assert!(before >= 0.0);
        let facts: Vec<_> = truth
            .entities
            .iter()
            .filter(|e| e.exists)
            .flat_map(|e| e.attributes.iter().map(move |a| (e.name.clone(), a.clone())))
            .collect();
        if facts.is_empty() {
            return Ok(());
        }
        let (entity, fact) = facts[which.index(facts.len())].clone();
        let prior = g.entity(&entity).unwrap().attribute(&fact.name).unwrap().distribution.prob_of(&fact.value);
        let edit = GraphEdit::SetAttributeValue { entity, attribute: fact.name, label: fact.value };
        let after = nll(&apply_edit(&g, &edit).unwrap(), &truth);
        prop_assert!((before - after - (-prior.ln())).abs() <= 1e-9, "{before} {after} {prior}");
    }

    #[test]
    fn truth_as_belief_scores_zero(g in common::gen::graph(), picks in proptest::collection::vec(any::<u8>(), 1..8)) {
        let truth = truth_for(&g, &picks);
        prop_assert_eq!(nll(&truth.to_belief_graph("truth"), &truth), 0.0);
    }
}
