//! proptest strategies for random belief graphs.

use belief_agent_core::belief_graph::{
    Attribute, BeliefGraph, CandidateDistribution, Entity, EntityType, ImportanceScore, Probability, Relation,
};
use proptest::prelude::*;

const LABELS: &[&str] = &["red", "blue", "green", "on", "under", "left of", "wood", "glass", "oil", "sketch"];

pub fn distribution() -> impl Strategy<Value = CandidateDistribution> {
    proptest::sample::subsequence(LABELS, 1..=6)
        .prop_flat_map(|labels| {
            let n = labels.len();
            (Just(labels), proptest::collection::vec(0.0f64..10.0, n), any::<bool>())
        })
        .prop_map(|(labels, mut weights, point)| {
            if point || weights.iter().sum::<f64>() <= 0.0 {
                weights.iter_mut().for_each(|w| *w = 0.0);
                weights[0] = 1.0;
            }
            CandidateDistribution::from_weights(labels.into_iter().zip(weights)).unwrap()
        })
}

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0]
}

fn attribute(name: String) -> impl Strategy<Value = Attribute> {
    (unit(), distribution()).prop_map(move |(imp, distribution)| Attribute {
        name: name.clone(),
        importance: ImportanceScore::new(imp).unwrap(),
        distribution,
    })
}

fn entity(name: String) -> impl Strategy<Value = Entity> {
    let attrs = (0usize..=4).prop_flat_map(|n| {
        (0..n).map(|i| attribute(format!("attr{i}"))).collect::<Vec<_>>()
    });
    let kind = prop_oneof![Just(EntityType::Explicit), Just(EntityType::Implicit), Just(EntityType::Background)];
    (unit(), unit(), kind, attrs).prop_map(move |(p, imp, kind, attributes)| {
        let mut e = Entity::new(
            name.clone(),
            format!("a {name}"),
            kind,
            Probability::new(p).unwrap(),
            ImportanceScore::new(imp).unwrap(),
        );
        e.attributes = attributes;
        e
    })
}

/// Graphs with at most five entities of at most four attributes each.
pub fn graph() -> impl Strategy<Value = BeliefGraph> {
    (1usize..=5)
        .prop_flat_map(|n| {
            let entities = (0..n).map(|i| entity(format!("thing{i}"))).collect::<Vec<_>>();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            let relations = proptest::sample::subsequence(pairs.clone(), 0..=pairs.len().min(4)).prop_flat_map(|ps| {
                ps.into_iter()
                    .map(|(a, b)| {
                        (unit(), distribution(), any::<bool>()).prop_map(move |(imp, d, bi)| Relation {
                            name: format!("thing{a}-thing{b}"),
                            description: String::new(),
                            spatial_distribution: d,
                            importance: ImportanceScore::new(imp).unwrap(),
                            entity_1: format!("thing{a}"),
                            entity_2: format!("thing{b}"),
                            is_bidirectional: bi,
                        })
                    })
                    .collect::<Vec<_>>()
            });
            (entities, relations)
        })
        .prop_map(|(entities, relations)| BeliefGraph { source_prompt: "random".into(), entities, relations })
}
