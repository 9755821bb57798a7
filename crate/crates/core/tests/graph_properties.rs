//! Invariants over randomly generated belief graphs.

mod common;

use belief_agent_core::belief_graph::{
    apply_edit, deserialize, entropy, serialize, validate, BeliefGraph, CandidateDistribution, GraphEdit,
};
use proptest::prelude::*;

fn distributions(g: &BeliefGraph) -> Vec<&CandidateDistribution> {
    let attrs = g.entities.iter().flat_map(|e| e.attributes.iter().map(|a| &a.distribution));
    attrs.chain(g.relations.iter().map(|r| &r.spatial_distribution)).collect()
}

/// One edit of every kind per target, with a label that is sometimes new.
fn edits(g: &BeliefGraph) -> Vec<GraphEdit> {
    let mut out = Vec::new();
    for (i, e) in g.entities.iter().enumerate() {
        out.push(GraphEdit::SetEntityExistence { entity: e.name.clone(), exists: i % 2 == 0 });
        out.push(GraphEdit::ConfirmImplicit { entity: e.name.clone() });
        for a in &e.attributes {
            let label = a.distribution.candidates().last().unwrap().label.clone();
            out.push(GraphEdit::SetAttributeValue { entity: e.name.clone(), attribute: a.name.clone(), label });
            out.push(GraphEdit::SetAttributeValue {
                entity: e.name.clone(),
                attribute: a.name.clone(),
                label: "something new".into(),
            });
        }
    }
    for r in &g.relations {
        let label = r.spatial_distribution.candidates()[0].label.clone();
        out.push(GraphEdit::SetRelationValue { relation: r.name.clone(), label });
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_graphs_hold_every_invariant(g in common::gen::graph()) {
        prop_assert!(validate(&g).is_empty(), "{:?}", validate(&g));
        for d in distributions(&g) {
            prop_assert!((d.sum() - 1.0).abs() <= 1e-6);
            let h = entropy(d);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (d.len() as f64).ln() + 1e-12);
        }
        for edit in edits(&g) {
            let once = apply_edit(&g, &edit).unwrap();
            prop_assert_eq!(&apply_edit(&once, &edit).unwrap(), &once);
            prop_assert!(validate(&once).is_empty());
        }
        prop_assert_eq!(deserialize(&serialize(&g)).unwrap(), g);
    }
}
