//! Evaluation cases: a starting prompt, the detailed caption it was cut
//! down from, an optional target image handle and a ground-truth graph.
//!
//! A manifest is one JSON document:
//!
//! ```json
//! {"name": "fixtures", "source": "hand-written", "cases": [
//!   {"case_id": "rabbit", "starting_prompt": "a rabbit",
//!    "ground_truth_caption": "a white rabbit sitting left of a cat",
//!    "ground_truth_graph_path": "graphs/rabbit.json"}
//! ]}
//! ```
//!
//! The graph may be inline (`ground_truth_graph`), in a separate file
//! relative to the manifest, or absent, in which case it is parsed from the
//! caption and the case is flagged as derived.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Llm};
use crate::belief_graph::{self, validate, BeliefGraph};
use crate::parsing::{BeliefParser, ParseError};
use crate::templates::{TemplateError, TemplateName, TemplateSet};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{}{message}", case_id.as_ref().map(|c| format!("case {c}: ")).unwrap_or_default())]
    Schema { case_id: Option<String>, message: String },
    #[error("case {case_id}: {source}")]
    Parse { case_id: String, source: ParseError },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("caption must not be empty")]
    EmptyCaption,
    #[error("summary is not shorter than the caption after {attempts} attempt(s)")]
    SummaryTooLong { attempts: u32 },
}

fn schema(case_id: Option<&str>, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema { case_id: case_id.map(String::from), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    pub starting_prompt: String,
    pub ground_truth_caption: String,
    pub ground_truth_graph: BeliefGraph,
    /// True when the graph was parsed from the caption at load time.
    #[serde(default)]
    pub graph_derived: bool,
    /// Alternative captions, for sources with several per image.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub source: String,
    pub cases: Vec<EvalCase>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDocument {
    case_id: String,
    #[serde(default)]
    image_ref: Option<String>,
    starting_prompt: String,
    ground_truth_caption: String,
    #[serde(default)]
    ground_truth_graph: Option<serde_json::Value>,
    #[serde(default)]
    ground_truth_graph_path: Option<PathBuf>,
    #[serde(default)]
    graph_derived: bool,
    #[serde(default)]
    captions: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDocument {
    name: String,
    #[serde(default)]
    source: String,
    cases: Vec<CaseDocument>,
}

/// Loads and validates a manifest. `parser` is needed only for cases
/// without a ground-truth graph.
pub fn load_manifest(path: &Path, parser: Option<&BeliefParser>) -> Result<Manifest, DatasetError> {
    let bytes = std::fs::read(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    let doc: ManifestDocument = serde_path_to_error::deserialize(de)
        .map_err(|e| schema(None, format!("at {}: {}", e.path(), e.inner())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut cases = Vec::with_capacity(doc.cases.len());
    for c in doc.cases {
        let id = c.case_id.trim().to_string();
        if id.is_empty() {
            return Err(schema(None, "case_id must not be empty"));
        }
        if !seen.insert(id.clone()) {
            return Err(schema(Some(&id), "duplicate case_id"));
        }
        let (graph, derived) = match (c.ground_truth_graph, c.ground_truth_graph_path) {
            (Some(_), Some(_)) => {
                return Err(schema(Some(&id), "give ground_truth_graph or ground_truth_graph_path, not both"))
            }
            (Some(value), None) => (graph_from_bytes(&id, &serde_json::to_vec(&value).expect("values serialize"))?, c.graph_derived),
            (None, Some(rel)) => {
                let gpath = base.join(rel);
                let bytes = std::fs::read(&gpath)
                    .map_err(|e| DatasetError::Io { path: gpath.display().to_string(), message: e.to_string() })?;
                (graph_from_bytes(&id, &bytes)?, c.graph_derived)
            }
            (None, None) => {
                let parser = parser.ok_or_else(|| schema(Some(&id), "no ground-truth graph and no parser to derive one"))?;
                let g = parser
                    .build_belief_graph(&c.ground_truth_caption)
                    .map_err(|source| DatasetError::Parse { case_id: id.clone(), source })?;
                (g, true)
            }
        };
        let case = EvalCase {
            case_id: id,
            image_ref: c.image_ref,
            starting_prompt: c.starting_prompt,
            ground_truth_caption: c.ground_truth_caption,
            ground_truth_graph: graph,
            graph_derived: derived,
            captions: c.captions,
        };
        validate_case(&case)?;
        cases.push(case);
    }
    Ok(Manifest { name: doc.name, source: doc.source, cases })
}

fn graph_from_bytes(case_id: &str, bytes: &[u8]) -> Result<BeliefGraph, DatasetError> {
    belief_graph::deserialize(bytes).map_err(|e| schema(Some(case_id), format!("ground-truth graph: {e}")))
}

fn validate_case(case: &EvalCase) -> Result<(), DatasetError> {
    let id = Some(case.case_id.as_str());
    if case.starting_prompt.trim().is_empty() {
        return Err(schema(id, "starting_prompt must not be empty"));
    }
    if case.ground_truth_caption.trim().is_empty() {
        return Err(schema(id, "ground_truth_caption must not be empty"));
    }
    if case.starting_prompt.chars().count() >= case.ground_truth_caption.chars().count() {
        return Err(schema(id, "starting_prompt must be shorter than ground_truth_caption"));
    }
    let violations = validate(&case.ground_truth_graph);
    if let Some(v) = violations.first() {
        return Err(schema(id, format!("ground-truth graph is invalid: {v}")));
    }
    Ok(())
}

/// Writes the manifest with every graph inline; loading it back gives an
/// equal manifest.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifests serialize");
    std::fs::write(path, text + "\n")
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Summarises a long caption into a short prompt naming only the primary
/// elements. A summary that is not shorter than the caption is retried once.
pub fn derive_starting_prompt(llm: &Llm, templates: &TemplateSet, caption: &str) -> Result<String, DatasetError> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(DatasetError::EmptyCaption);
    }
    const ATTEMPTS: u32 = 2;
    let request = templates.render(TemplateName::StartingPrompt, &[("caption", caption)])?;
    let mut prompt = request.clone();
    for _ in 0..ATTEMPTS {
        let summary = llm.complete(&prompt)?.split_whitespace().collect::<Vec<_>>().join(" ");
        if !summary.is_empty() && summary.chars().count() < caption.chars().count() {
            return Ok(summary);
        }
        prompt = format!("{request}\nThe short prompt must be much shorter than the caption.");
    }
    Err(DatasetError::SummaryTooLong { attempts: ATTEMPTS })
}

/// The shortest caption, first on ties.
pub fn shortest_caption(captions: &[String]) -> Option<&str> {
    captions.iter().min_by_key(|c| c.chars().count()).map(String::as_str)
}
