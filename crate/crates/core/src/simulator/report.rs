//! Aggregation across cases and on-disk reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchReport, SimError, Transcript};

/// Mean and population standard deviation of one metric at one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    /// 0 is the state before any question.
    pub turn: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Per-turn aggregates for every metric over all transcripts, sorted by
/// metric then turn.
pub fn aggregate(transcripts: &[Transcript]) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for t in transcripts {
        let turns = std::iter::once((0, &t.initial_metrics)).chain(t.turns.iter().map(|l| (l.turn, &l.metrics)));
        for (turn, metrics) in turns {
            for (id, v) in metrics {
                cells.entry((id.clone(), turn)).or_default().push(*v);
            }
        }
    }
    cells
        .into_iter()
        .map(|((metric, turn), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            AggregateRow { metric, turn, mean, std: var.sqrt(), n }
        })
        .collect()
}

/// File-system safe name for a case id.
fn sanitize(id: &str) -> String {
    let s: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() { "case".into() } else { s }
}

fn io(e: impl std::fmt::Display) -> SimError {
    SimError::Io(e.to_string())
}

fn write_rows(path: &Path, rows: &[AggregateRow]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `transcripts/<case>.json`, `per_turn.csv`, `aggregate.csv` (final
/// turn only) and `summary.txt` under `dir`.
pub fn write_reports(dir: &Path, report: &BatchReport) -> Result<(), SimError> {
    let tdir = dir.join("transcripts");
    fs::create_dir_all(&tdir).map_err(io)?;
    for t in &report.transcripts {
        fs::write(tdir.join(format!("{}.json", sanitize(&t.case_id))), t.to_json()).map_err(io)?;
    }
    let rows = aggregate(&report.transcripts);
    write_rows(&dir.join("per_turn.csv"), &rows)?;
    let last = report.config.max_turns;
    let finals: Vec<_> = rows.iter().filter(|r| r.turn == last).cloned().collect();
    write_rows(&dir.join("aggregate.csv"), &finals)?;

    let mut summary = format!(
        "strategy: {}\nturns: {}\ncases: {} completed, {} failed\n",
        report.config.strategy,
        last,
        report.transcripts.len(),
        report.failures.len()
    );
    for r in &finals {
        summary.push_str(&format!("{}: mean {:.4} std {:.4} (n={})\n", r.metric, r.mean, r.std, r.n));
    }
    for f in &report.failures {
        summary.push_str(&format!("failed {}: {}\n", f.case_id, f.error));
    }
    fs::write(dir.join("summary.txt"), summary).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief_graph::BeliefGraph;
    use crate::simulator::{SelfPlayConfig, TurnLog};

    fn transcript(id: &str, values: &[f64]) -> Transcript {
        let m = |v: f64| BTreeMap::from([("nll".to_string(), v)]);
        Transcript {
            case_id: id.into(),
            config: SelfPlayConfig::new("mhis"),
            initial_metrics: m(values[0]),
            turns: values[1..]
                .iter()
                .enumerate()
                .map(|(i, v)| TurnLog {
                    turn: i + 1,
                    action: "ask".into(),
                    question: String::new(),
                    answer: String::new(),
                    summary: String::new(),
                    merged_prompt: String::new(),
                    degraded: None,
                    metrics: m(*v),
                })
                .collect(),
            final_prompt: String::new(),
            final_graph: BeliefGraph::default(),
            omitted_metrics: BTreeMap::new(),
        }
    }

    #[test]
    fn population_statistics() {
        let rows = aggregate(&[transcript("a", &[4.0, 2.0]), transcript("b", &[2.0, 0.0])]);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].turn, rows[0].mean, rows[0].std, rows[0].n), (0, 3.0, 1.0, 2));
        assert_eq!((rows[1].turn, rows[1].mean, rows[1].std), (1, 1.0, 1.0));
    }

    #[test]
    fn sanitizes_ids() {
        assert_eq!(sanitize("a/b c"), "a_b_c");
        assert_eq!(sanitize(""), "case");
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SelfPlayConfig::new("mhis");
        config.max_turns = 1;
        let report = BatchReport { config, transcripts: vec![transcript("x/1", &[1.0, 0.5])], failures: vec![] };
        write_reports(dir.path(), &report).unwrap();
        let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(agg, "metric,turn,mean,std,n\nnll,1,0.5,0.0,1\n");
        assert!(dir.path().join("transcripts/x_1.json").exists());
        assert!(fs::read_to_string(dir.path().join("summary.txt")).unwrap().contains("nll: mean 0.5000"));
    }
}
