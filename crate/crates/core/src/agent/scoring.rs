//! Question scoring: how much asking about a target is worth.
//!
//! * attribute: `IS(e) * IS(a) * P(e) * H(a)`
//! * relation: `IS(r) * P(e1) * P(e2) * H(r)`
//! * existence: `IS(e) * Hb(P(e))`
//!
//! `H` is the natural-log entropy of the candidate distribution and `Hb` the
//! entropy of the yes/no appearance event.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::QuestionTarget;
use crate::belief_graph::{bernoulli_entropy, entropy, name_key, BeliefGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidateQuestion {
    pub target: QuestionTarget,
    pub score: f64,
}

impl ScoredCandidateQuestion {
    /// Tie-break key: entity (or relation) name, then attribute name.
    fn key(&self) -> (String, String) {
        match &self.target {
            QuestionTarget::AttributeValue { entity, attribute } => (name_key(entity), name_key(attribute)),
            QuestionTarget::EntityExistence { entity } => (name_key(entity), String::new()),
            QuestionTarget::RelationValue { relation } => (name_key(relation), String::new()),
            QuestionTarget::FreeForm => (String::new(), String::new()),
        }
    }
}

/// Every askable target with its score, best first. Equal scores are
/// ordered by name so the result is deterministic.
pub fn score_targets(graph: &BeliefGraph) -> Vec<ScoredCandidateQuestion> {
    let mut out = Vec::new();
    for e in &graph.entities {
        let (ise, pe) = (e.importance.value(), e.prob_appearing.value());
        out.push(ScoredCandidateQuestion {
            target: QuestionTarget::EntityExistence { entity: e.name.clone() },
            score: ise * bernoulli_entropy(e.prob_appearing),
        });
        for a in &e.attributes {
            out.push(ScoredCandidateQuestion {
                target: QuestionTarget::AttributeValue { entity: e.name.clone(), attribute: a.name.clone() },
                score: ise * a.importance.value() * pe * entropy(&a.distribution),
            });
        }
    }
    for r in &graph.relations {
        out.push(ScoredCandidateQuestion {
            target: QuestionTarget::RelationValue { relation: r.name.clone() },
            score: r.importance.value() * graph.relation_probability(r) * entropy(&r.spatial_distribution),
        });
    }
    // partial_cmp: point masses give -0.0, which must tie with 0.0. Scores are never NaN.
    out.sort_by(|a, b| match b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal) {
        Ordering::Equal => a.key().cmp(&b.key()),
        other => other,
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief_graph::testing::*;

    fn score_of(list: &[ScoredCandidateQuestion], target: &QuestionTarget) -> f64 {
        list.iter().find(|s| &s.target == target).unwrap().score
    }

    #[test]
    fn breakfast_scores_match_hand_computation() {
        let scores = score_targets(&breakfast());
        // 0.9 * 1.0 * 1.0 * H(0.09, 0.61, 0.30), computed independently.
        let cuisine = QuestionTarget::AttributeValue { entity: "breakfast".into(), attribute: "cuisine".into() };
        assert!((score_of(&scores, &cuisine) - 0.791_484_932_145_118_6).abs() < 1e-12);
        // 0.5 * Hb(0.35)
        let fork = QuestionTarget::EntityExistence { entity: "fork".into() };
        assert!((score_of(&scores, &fork) - 0.323_723_319_517_316_25).abs() < 1e-12);
        // 0.2 * (0.35 * 1.0) * H(0.7, 0.3)
        let rel = QuestionTarget::RelationValue { relation: "fork-table".into() };
        assert!((score_of(&scores, &rel) - 0.042_760_501_143_842_54).abs() < 1e-12);
        assert_eq!(scores[0].target, cuisine);
    }

    #[test]
    fn collapsed_targets_score_zero() {
        let scores = score_targets(&breakfast());
        let material = QuestionTarget::AttributeValue { entity: "table".into(), attribute: "material".into() };
        assert_eq!(score_of(&scores, &material), 0.0);
    }

    #[test]
    fn ties_break_by_name() {
        let mut g = breakfast();
        for e in &mut g.entities {
            e.importance = is(0.0);
        }
        for r in &mut g.relations {
            r.importance = is(0.0);
        }
        let scores = score_targets(&g);
        assert!(scores.iter().all(|s| s.score == 0.0));
        let keys: Vec<_> = scores.iter().map(|s| s.key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
