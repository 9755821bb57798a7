//! Evaluation metrics: negative log-likelihood of the ground truth under a
//! belief, embedding similarity of prompts, and best-of-N image ranking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends, ImageArtifact};
use crate::belief_graph::{name_key, BeliefGraph, CandidateDistribution, GroundTruthState, Relation};

pub const NLL: &str = "nll";
pub const T2T_EMBED: &str = "t2t_embed";
pub const I2I_EXT: &str = "i2i_ext";
pub const T2I_VQA_EXT: &str = "t2i_vqa_ext";

/// Probability floor for ground-truth facts the belief omits or rules out.
pub const NLL_EPSILON: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no images to rank")]
    EmptyInput,
    #[error("image {image_id} has {len} scores, expected {expected}")]
    UnequalLengths { image_id: String, len: usize, expected: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub id: String,
    pub value: f64,
    pub turn: usize,
}

fn neg_ln(q: f64) -> f64 {
    // max(0) turns -ln(1) = -0.0 into 0.0.
    (-q.max(NLL_EPSILON).ln()).max(0.0)
}

fn label_prob(dist: &CandidateDistribution, value: &str) -> f64 {
    dist.prob_of(value)
}

fn matching_relation<'a>(belief: &'a BeliefGraph, name: &str, e1: &str, e2: &str) -> Option<&'a Relation> {
    let key = name_key(name);
    let (a, b) = (name_key(e1), name_key(e2));
    let ends = if a <= b { (a, b) } else { (b, a) };
    belief
        .relations
        .iter()
        .find(|r| name_key(&r.name) == key)
        .or_else(|| belief.relations.iter().find(|r| r.endpoint_key() == ends))
}

/// Negative log-likelihood of every ground-truth fact under `belief`,
/// treating facts as independent. Names match after trimming and
/// case-folding; relations match by name, else by their two endpoints.
/// Facts the belief omits score `-ln(NLL_EPSILON)` each.
pub fn nll(belief: &BeliefGraph, truth: &GroundTruthState) -> f64 {
    let mut total = 0.0;
    for gt in &truth.entities {
        let Some(e) = belief.entity(&gt.name) else {
            tracing::debug!(entity = %gt.name, "ground-truth entity missing from belief");
            let facts = 1 + if gt.exists { gt.attributes.len() } else { 0 };
            total += facts as f64 * neg_ln(0.0);
            continue;
        };
        let p = e.prob_appearing.value();
        total += neg_ln(if gt.exists { p } else { 1.0 - p });
        if !gt.exists {
            continue;
        }
        for a in &gt.attributes {
            let q = e.attribute(&a.name).map_or(0.0, |ba| label_prob(&ba.distribution, &a.value));
            total += neg_ln(q);
        }
    }
    for r in &truth.relations {
        let q = matching_relation(belief, &r.name, &r.entity_1, &r.entity_2)
            .map_or(0.0, |br| label_prob(&br.spatial_distribution, &r.spatial_value));
        total += neg_ln(q);
    }
    total
}

/// Cosine similarity of the two texts' embeddings.
pub fn t2t_similarity(backends: &Backends, a: &str, b: &str) -> Result<f64, BackendError> {
    Ok(backends.embed(a)?.cosine(&backends.embed(b)?))
}

/// Image ids ordered best first: highest mean score, ties to the lowest id.
pub fn rank_images(scores: &[(String, Vec<f64>)]) -> Result<Vec<String>, MetricsError> {
    let expected = scores.first().ok_or(MetricsError::EmptyInput)?.1.len();
    let mut means = Vec::with_capacity(scores.len());
    for (id, s) in scores {
        if s.len() != expected {
            return Err(MetricsError::UnequalLengths { image_id: id.clone(), len: s.len(), expected });
        }
        let mean = if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
        means.push((id.clone(), mean));
    }
    means.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(means.into_iter().map(|(id, _)| id).collect())
}

pub fn select_best_image(scores: &[(String, Vec<f64>)]) -> Result<String, MetricsError> {
    Ok(rank_images(scores)?.swap_remove(0))
}

/// Images for one prompt across seeds, scored against yes/no questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOfN {
    pub images: Vec<ImageArtifact>,
    /// Per image, one score per question, in image order.
    pub scores: Vec<Vec<f64>>,
    /// Index into `images` of the best image.
    pub best: usize,
}

impl BestOfN {
    pub fn best_image(&self) -> &ImageArtifact {
        &self.images[self.best]
    }
}

/// Generates one image per seed `base_seed..base_seed + n` and keeps the
/// one answering the questions best. Needs a scorer backend.
pub fn generate_best_of(
    backends: &Backends,
    prompt: &str,
    questions: &[String],
    n: usize,
    base_seed: u64,
) -> Result<BestOfN, MetricsError> {
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let scorer = backends.scorer.as_ref().ok_or_else(|| BackendError::Config("no scorer backend configured".into()))?;
    let mut images = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let image = backends.generate_image(prompt, base_seed.wrapping_add(i))?;
        scores.push(questions.iter().map(|q| scorer.score_image(&image, q)).collect::<Result<Vec<_>, _>>()?);
        images.push(image);
    }
    let table: Vec<(String, Vec<f64>)> =
        images.iter().zip(&scores).enumerate().map(|(i, (_, s))| (format!("{i:08}"), s.clone())).collect();
    let best = select_best_image(&table)?.parse().expect("ids are indices");
    Ok(BestOfN { images, scores, best })
}

/// Turns a declarative sentence into the yes/no question scorers consume.
pub fn yes_no_question(statement: &str) -> String {
    let s = statement.trim().trim_end_matches(['.', '?', '!']).trim();
    format!("Does the image show: {s}?")
}

/// One yes/no question per ground-truth fact.
pub fn ground_truth_questions(truth: &GroundTruthState) -> Vec<String> {
    let mut out = Vec::new();
    for e in &truth.entities {
        if !e.exists {
            out.push(yes_no_question(&format!("there is no {} in the image", e.name)));
            continue;
        }
        out.push(yes_no_question(&format!("there is a {} in the image", e.name)));
        for a in &e.attributes {
            out.push(yes_no_question(&format!("the {} of the {} is {}", a.name, e.name, a.value)));
        }
    }
    for r in &truth.relations {
        out.push(yes_no_question(&format!("the {} is {} the {}", r.entity_1, r.spatial_value, r.entity_2)));
    }
    out
}
