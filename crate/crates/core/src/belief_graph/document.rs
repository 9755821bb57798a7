//! Canonical JSON document for belief graphs. Field names follow the parser
//! output format, so parser documents load without renaming.

use super::{BeliefGraph, GraphError};

pub fn serialize(graph: &BeliefGraph) -> Vec<u8> {
    serde_json::to_vec(graph).expect("belief graphs always serialize")
}

pub fn serialize_pretty(graph: &BeliefGraph) -> String {
    serde_json::to_string_pretty(graph).expect("belief graphs always serialize")
}

pub fn deserialize(bytes: &[u8]) -> Result<BeliefGraph, GraphError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let graph: BeliefGraph = serde_path_to_error::deserialize(de).map_err(|e| GraphError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    Ok(graph)
}
