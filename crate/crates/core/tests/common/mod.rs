#![allow(dead_code)]

pub mod gen;

use std::path::PathBuf;
use std::sync::Arc;

use belief_agent_core::agent::Agent;
use belief_agent_core::backends::{scripted, BackendConfig};
use belief_agent_core::datasets::{load_manifest, Manifest};
use belief_agent_core::templates::TemplateSet;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn backend_config(detail_dropout: f64) -> BackendConfig {
    let mut config = BackendConfig::default();
    config.scripted.rules = Some(fixture("rules.toml"));
    config.scripted.detail_dropout = detail_dropout;
    config
}

pub fn agent() -> Agent {
    let backends = scripted::build_backends(&backend_config(0.0)).expect("fixture rules load");
    Agent::new(backends, Arc::new(TemplateSet::builtin()))
}

pub fn manifest() -> Manifest {
    load_manifest(&fixture("manifest.json"), None).expect("fixture manifest loads")
}

/// Frozen initial NLL per case, computed by fixtures/generate.py.
pub fn expected_initial_nll(case_id: &str) -> f64 {
    let text = std::fs::read_to_string(fixture("expected.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc[case_id]["initial_nll"].as_f64().unwrap()
}
