//! Proactive text-to-image agents built around an explicit belief graph.

pub mod agent;
pub mod backends;
pub mod belief_graph;
pub mod datasets;
pub mod metrics;
pub mod parsing;
pub mod simulator;
pub mod templates;
