//! Acceptance checks, one PASS/FAIL line each. Exits nonzero on any failure.
//!
//! Library-level checks run in-process against the scripted fixture world;
//! the self-play and service checks drive the real binary.

#[path = "../../core/tests/common/gen.rs"]
mod gen;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use belief_agent_core::agent::{score_targets, Action, Agent, Observation, QuestionTarget};
use belief_agent_core::backends::scripted::{self, key_phrase};
use belief_agent_core::backends::BackendConfig;
use belief_agent_core::belief_graph::{
    apply_edit, deserialize, entropy, serialize, validate, Attribute, BeliefGraph, CandidateDistribution, Entity,
    EntityType, GraphEdit, GroundTruthAttribute, GroundTruthEntity, GroundTruthState, ImportanceScore, Probability,
};
use belief_agent_core::datasets::{load_manifest, Manifest};
use belief_agent_core::metrics::{generate_best_of, nll, select_best_image, yes_no_question, NLL};
use belief_agent_core::simulator::{run_batch, SelfPlayConfig, SimulatedUser, DEFAULT_MAX_TURNS};
use belief_agent_core::templates::TemplateSet;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::{json, Value};

type Check = Result<(), String>;
type CheckFn = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond { Ok(()) } else { Err(msg()) }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn backend_config(detail_dropout: f64) -> BackendConfig {
    let mut config = BackendConfig::default();
    config.scripted.rules = Some(fixture("rules.toml"));
    config.scripted.detail_dropout = detail_dropout;
    config
}

fn agent() -> Agent {
    Agent::new(scripted::build_backends(&backend_config(0.0)).unwrap(), Arc::new(TemplateSet::builtin()))
}

fn manifest() -> Manifest {
    load_manifest(&fixture("manifest.json"), None).unwrap()
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn distributions(g: &BeliefGraph) -> Vec<&CandidateDistribution> {
    let attrs = g.entities.iter().flat_map(|e| e.attributes.iter().map(|a| &a.distribution));
    attrs.chain(g.relations.iter().map(|r| &r.spatial_distribution)).collect()
}

fn graph_invariants() -> Check {
    let start = Instant::now();
    runner(1000)
        .run(&gen::graph(), |g| {
            prop_assert!(validate(&g).is_empty());
            for d in distributions(&g) {
                prop_assert!((d.sum() - 1.0).abs() <= 1e-6);
                let h = entropy(d);
                prop_assert!(h >= 0.0 && h <= (d.len() as f64).ln() + 1e-12);
            }
            let mut edits = Vec::new();
            for e in &g.entities {
                edits.push(GraphEdit::SetEntityExistence { entity: e.name.clone(), exists: true });
                edits.push(GraphEdit::ConfirmImplicit { entity: e.name.clone() });
                for a in &e.attributes {
                    let label = a.distribution.candidates().last().unwrap().label.clone();
                    edits.push(GraphEdit::SetAttributeValue { entity: e.name.clone(), attribute: a.name.clone(), label });
                }
            }
            for r in &g.relations {
                let label = r.spatial_distribution.candidates()[0].label.clone();
                edits.push(GraphEdit::SetRelationValue { relation: r.name.clone(), label });
            }
            for edit in &edits {
                let once = apply_edit(&g, edit).unwrap();
                prop_assert_eq!(&apply_edit(&once, edit).unwrap(), &once);
            }
            prop_assert_eq!(deserialize(&serialize(&g)).unwrap(), g);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))
}

fn h(d: &CandidateDistribution) -> f64 {
    d.candidates().iter().map(|c| c.prob.value()).filter(|p| *p > 0.0).map(|p| -p * p.ln()).sum()
}

fn hb(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum()
}

fn scoring_oracle() -> Check {
    runner(200)
        .run(&gen::graph(), |g| {
            let prob = |n: &str| g.entity(n).map_or(0.0, |e| e.prob_appearing.value());
            let mut oracle = Vec::new();
            for e in &g.entities {
                let (ise, pe) = (e.importance.value(), e.prob_appearing.value());
                oracle.push((QuestionTarget::EntityExistence { entity: e.name.clone() }, ise * hb(pe)));
                for a in &e.attributes {
                    let t = QuestionTarget::AttributeValue { entity: e.name.clone(), attribute: a.name.clone() };
                    oracle.push((t, ise * a.importance.value() * pe * h(&a.distribution)));
                }
            }
            for r in &g.relations {
                let v = r.importance.value() * prob(&r.entity_1) * prob(&r.entity_2) * h(&r.spatial_distribution);
                oracle.push((QuestionTarget::RelationValue { relation: r.name.clone() }, v));
            }
            let scored = score_targets(&g);
            prop_assert_eq!(scored.len(), oracle.len());
            for s in &scored {
                let v = oracle.iter().find(|(t, _)| *t == s.target).map(|(_, v)| *v).unwrap();
                prop_assert!((s.score - v).abs() <= 1e-9);
            }
            let best = oracle.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((scored[0].score - best).abs() <= 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn settled(g: &BeliefGraph, target: &QuestionTarget) -> bool {
    match target {
        QuestionTarget::AttributeValue { entity, attribute } => g
            .entity(entity)
            .and_then(|e| e.attribute(attribute))
            .is_some_and(|a| a.distribution.is_point_mass() && a.importance.value() == 0.0),
        QuestionTarget::RelationValue { relation } => g
            .relation(relation)
            .is_some_and(|r| r.spatial_distribution.is_point_mass() && r.importance.value() == 0.0),
        QuestionTarget::EntityExistence { entity } => {
            let p = g.entity(entity).map_or(-1.0, |e| e.prob_appearing.value());
            let score = score_targets(g).into_iter().find(|s| &s.target == target).map_or(1.0, |s| s.score);
            (p == 0.0 || p == 1.0) && score == 0.0
        }
        QuestionTarget::FreeForm => false,
    }
}

fn transition_contract() -> Check {
    let agent = agent();
    for case in &manifest().cases {
        let user = SimulatedUser::with_graph(&case.ground_truth_caption, case.ground_truth_graph.clone());
        let mut state = agent.start_session(&case.starting_prompt, "mhis").map_err(|e| e.to_string())?;
        let mut answered: Vec<QuestionTarget> = Vec::new();
        for turn in 1..=10 {
            let action = agent.select_action(&state).map_err(|e| e.to_string())?;
            let observation = match &action {
                Action::AskQuestion { target, question_text, .. } => {
                    ensure(!answered.contains(target), || format!("{}: {target:?} recurred", case.case_id))?;
                    let text = user.answer_question(&agent, question_text, &state.history).map_err(|e| e.to_string())?;
                    Observation::AnswerText { text }
                }
                _ => Observation::NoOp,
            };
            state = agent.transition(&state, &action, &observation).map_err(|e| e.to_string())?;
            if let Action::AskQuestion { target, .. } = action {
                answered.push(target);
            }
            for t in &answered {
                ensure(settled(&state.graph, t), || format!("{} turn {turn}: {t:?} not settled", case.case_id))?;
            }
        }
        ensure(!answered.is_empty(), || format!("{}: nothing asked", case.case_id))?;
    }
    Ok(())
}

fn nll_properties() -> Check {
    let mut g = BeliefGraph::new("a cat");
    let color = CandidateDistribution::from_weights([("black", 0.5), ("white", 0.5)]).unwrap();
    let mut cat = Entity::new(
        "cat",
        "a cat",
        EntityType::Explicit,
        Probability::new(0.8).unwrap(),
        ImportanceScore::new(1.0).unwrap(),
    );
    cat.attributes.push(Attribute { name: "color".into(), importance: ImportanceScore::new(1.0).unwrap(), distribution: color });
    g.entities.push(cat);
    let truth = GroundTruthState {
        entities: vec![GroundTruthEntity {
            name: "cat".into(),
            exists: true,
            attributes: vec![GroundTruthAttribute { name: "color".into(), value: "black".into() }],
        }],
        relations: vec![],
    };
    let hand = nll(&g, &truth);
    ensure((hand - 0.91629).abs() < 1e-5, || format!("hand case gave {hand}"))?;
    ensure(nll(&truth.to_belief_graph("a black cat"), &truth) == 0.0, || "truth as belief is not 0".into())?;
    let edit = GraphEdit::SetAttributeValue { entity: "cat".into(), attribute: "color".into(), label: "black".into() };
    let drop = hand - nll(&apply_edit(&g, &edit).unwrap(), &truth);
    ensure((drop - (-(0.5f64).ln())).abs() < 1e-12, || format!("collapse dropped NLL by {drop}"))?;

    // The same two properties over random beliefs, truth picked from each belief's mode.
    runner(200)
        .run(&gen::graph(), |g| {
            let entities: Vec<GroundTruthEntity> = g
                .entities
                .iter()
                .map(|e| GroundTruthEntity {
                    name: e.name.clone(),
                    exists: e.prob_appearing.value() >= 0.5,
                    attributes: e
                        .attributes
                        .iter()
                        .map(|a| GroundTruthAttribute { name: a.name.clone(), value: a.distribution.candidates()[0].label.clone() })
                        .collect(),
                })
                .collect();
            let truth = GroundTruthState { entities, relations: vec![] };
            prop_assert_eq!(nll(&truth.to_belief_graph("truth"), &truth), 0.0);
            let before = nll(&g, &truth);
            for e in truth.entities.iter().filter(|e| e.exists) {
                for a in &e.attributes {
                    let prior = g.entity(&e.name).unwrap().attribute(&a.name).unwrap().distribution.prob_of(&a.value);
                    let edit = GraphEdit::SetAttributeValue { entity: e.name.clone(), attribute: a.name.clone(), label: a.value.clone() };
                    let after = nll(&apply_edit(&g, &edit).unwrap(), &truth);
                    prop_assert!((before - after + prior.ln()).abs() <= 1e-9);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_belief-agent"));
    cmd.arg("--rules").arg(fixture("rules.toml"));
    cmd
}

/// Runs selfplay with the default turn budget and returns the transcript files.
fn selfplay(out: &Path, strategy: &str) -> Result<Vec<(String, String)>, String> {
    let status = binary()
        .args(["--strategy", strategy, "selfplay"])
        .arg(fixture("manifest.json"))
        .arg("--out")
        .arg(out)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("selfplay exited with {status}"))?;
    let mut files: Vec<_> = std::fs::read_dir(out.join("transcripts"))
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    files.sort();
    Ok(files)
}

fn nll_series(transcript: &str) -> Vec<f64> {
    let doc: Value = serde_json::from_str(transcript).unwrap();
    doc["turns"].as_array().unwrap().iter().map(|t| t["metrics"][NLL].as_f64().unwrap()).collect()
}

fn selfplay_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = selfplay(&dir.path().join("a"), "mhis")?;
    let b = selfplay(&dir.path().join("b"), "mhis")?;
    ensure(a.len() == 5, || format!("{} transcripts", a.len()))?;
    ensure(a == b, || "transcripts differ between runs".into())?;
    for (name, text) in &a {
        let s = nll_series(text);
        ensure(s.last() <= s.first(), || format!("{name}: final NLL above turn 1: {s:?}"))?;
    }
    Ok(())
}

fn strategy_ordering() -> Check {
    let agent = agent();
    let cases = manifest().cases;
    let mean = |strategy: &str| -> Result<f64, String> {
        let report = run_batch(&agent, &cases, &SelfPlayConfig::new(strategy), 4).map_err(|e| e.to_string())?;
        ensure(report.failures.is_empty(), || format!("{strategy}: {:?}", report.failures))?;
        let finals: Vec<f64> = report.transcripts.iter().map(|t| t.final_metric(NLL).unwrap()).collect();
        Ok(finals.iter().sum::<f64>() / finals.len() as f64)
    };
    let (mhis, baseline, free_form) = (mean("mhis")?, mean("t2i-baseline")?, mean("aicq-base")?);
    ensure(mhis < baseline && free_form <= mhis, || {
        format!("mhis {mhis}, t2i-baseline {baseline}, aicq-base {free_form}")
    })
}

fn best_of_n() -> Check {
    runner(100)
        .run(
            &(1usize..6).prop_flat_map(|q| {
                proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], q), 1..12)
            }),
            |rows| {
                let table: Vec<_> = rows.into_iter().enumerate().map(|(i, r)| (format!("img{i:02}"), r)).collect();
                let mut best: Option<(f64, &str)> = None;
                for (id, s) in &table {
                    let m = s.iter().sum::<f64>() / s.len() as f64;
                    if best.is_none_or(|(bm, bid)| m > bm || (m == bm && id.as_str() < bid)) {
                        best = Some((m, id));
                    }
                }
                prop_assert_eq!(select_best_image(&table).unwrap(), best.unwrap().1);
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;

    let statements = ["a red barn", "a white horse beside the barn", "the sky is stormy", "a wooden fence", "the image is an oil painting"];
    let questions: Vec<String> = statements.iter().map(|s| yes_no_question(s)).collect();
    let backends = scripted::build_backends(&backend_config(0.5)).map_err(|e| e.to_string())?;
    let result = generate_best_of(&backends, &statements.join(". "), &questions, 10, 100).map_err(|e| e.to_string())?;
    ensure(result.images.len() == 10, || format!("{} images", result.images.len()))?;
    let covered = |text: &str| questions.iter().filter(|q| text.to_lowercase().contains(key_phrase(q))).count();
    let counts: Vec<usize> = result.images.iter().map(|i| covered(&i.prompt_used)).collect();
    let most = *counts.iter().max().unwrap();
    ensure(counts[result.best] == most, || format!("picked {} of {counts:?}", result.best))
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(data: &Path) -> Result<(Server, String), String> {
    let port = TcpListener::bind("127.0.0.1:0").and_then(|l| l.local_addr()).map_err(|e| e.to_string())?.port();
    let addr = format!("127.0.0.1:{port}");
    let child = binary()
        .args(["serve", "--addr", &addr, "--data-dir"])
        .arg(data)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let server = Server(child);
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if request(&addr, "GET", "/health", None).is_ok_and(|(s, _)| s == 200) {
            return Ok((server, addr));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    Err("server did not come up".into())
}

/// Minimal HTTP/1.1 exchange with `Connection: close`.
fn request(addr: &str, method: &str, path: &str, body: Option<&Value>) -> Result<(u16, Value), String> {
    let mut stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let payload = body.map(Value::to_string).unwrap_or_default();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        payload.len()
    );
    stream.write_all(head.as_bytes()).and_then(|_| stream.write_all(payload.as_bytes())).map_err(|e| e.to_string())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).map_err(|e| e.to_string())?;
    let status = raw.split(' ').nth(1).and_then(|s| s.parse().ok()).ok_or("no status line")?;
    let (headers, rest) = raw.split_once("\r\n\r\n").ok_or("no header end")?;
    let text = if headers.to_ascii_lowercase().contains("transfer-encoding: chunked") { dechunk(rest) } else { rest.to_string() };
    Ok((status, serde_json::from_str(&text).unwrap_or(Value::Null)))
}

fn dechunk(mut rest: &str) -> String {
    let mut out = String::new();
    while let Some((size, tail)) = rest.split_once("\r\n") {
        let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&tail[..n]);
        rest = &tail[n + 2..];
    }
    out
}

fn service_contract() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (id, record) = {
        let (_server, addr) = start_server(dir.path())?;
        let call = |m: &str, p: &str, b: Option<Value>| request(&addr, m, p, b.as_ref());
        let expect = |got: Result<(u16, Value), String>, status: u16, what: &str| -> Result<Value, String> {
            let (s, v) = got?;
            ensure(s == status, || format!("{what}: status {s}, body {v}"))?;
            Ok(v)
        };
        let created = expect(call("POST", "/v1/sessions", Some(json!({"prompt": "breakfast on a table"}))), 200, "create")?;
        let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
        let s = |suffix: &str| format!("/v1/sessions/{id}{suffix}");
        expect(call("POST", "/v1/sessions", Some(json!({"prompt": "x", "strategy": "nope"}))), 400, "bad strategy")?;
        expect(call("POST", "/v1/sessions", Some(json!({"text": 1}))), 400, "bad body")?;
        let list = expect(call("GET", "/v1/sessions", None), 200, "list")?;
        ensure(list.to_string().contains(&id), || format!("list lacks the session: {list}"))?;
        expect(call("GET", &s(""), None), 200, "get")?;
        expect(call("GET", "/v1/sessions/missing", None), 404, "missing")?;
        let q = expect(call("GET", &s("/question"), None), 200, "question")?;
        ensure(q["type"] == "ask_question", || format!("question: {q}"))?;

        // Two concurrent answers to one question: exactly one wins.
        let (a, b) = std::thread::scope(|scope| {
            let one = scope.spawn(|| call("POST", &s("/answer"), Some(json!({"answer": "Indian"}))));
            let two = scope.spawn(|| call("POST", &s("/answer"), Some(json!({"answer": "English"}))));
            (one.join().unwrap(), two.join().unwrap())
        });
        let mut statuses = [a?.0, b?.0];
        statuses.sort();
        ensure(statuses == [200, 409], || format!("double answer gave {statuses:?}"))?;
        expect(call("POST", &s("/answer"), Some(json!({"answer": "yes"}))), 409, "answer without question")?;

        let edit = json!({"type": "set_attribute_value", "entity": "table", "attribute": "material", "label": "marble"});
        expect(call("POST", &s("/edits"), Some(json!({"edits": [edit]}))), 200, "edits")?;
        let bad = json!({"type": "set_entity_existence", "entity": "dragon", "exists": true});
        expect(call("POST", &s("/edits"), Some(json!({"edits": [bad]}))), 400, "bad edit")?;
        let generated = expect(call("POST", &s("/generate"), Some(json!({"n_seeds": 3}))), 200, "generate")?;
        ensure(generated["images"].as_array().is_some_and(|i| i.len() == 3), || format!("generate: {generated}"))?;
        expect(call("POST", &s("/generate"), Some(json!({"n_seeds": 0}))), 400, "zero seeds")?;
        expect(call("GET", &s("/graph"), None), 200, "graph")?;
        let record = expect(call("GET", &s(""), None), 200, "get")?;
        (id, record)
    };
    let (_server, addr) = start_server(dir.path())?;
    let (status, reloaded) = request(&addr, "GET", &format!("/v1/sessions/{id}"), None)?;
    ensure(status == 200 && reloaded == record, || "session changed across restart".into())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))
}

fn turn_budget() -> Check {
    ensure(DEFAULT_MAX_TURNS == 15 && SelfPlayConfig::new("mhis").max_turns == 15, || "library default is not 15".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = selfplay(dir.path(), "mhis")?;
    for (name, text) in &files {
        let n = nll_series(text).len();
        ensure(n == 15, || format!("{name}: {n} turns"))?;
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).map_err(|e| e.to_string())?;
    ensure(summary.contains("turns: 15\n"), || format!("summary: {summary}"))
}

fn main() {
    let checks: [(&str, CheckFn); 9] = [
        ("belief graph invariants", graph_invariants),
        ("question scoring oracle", scoring_oracle),
        ("answered targets settle", transition_contract),
        ("nll properties", nll_properties),
        ("self-play determinism", selfplay_determinism),
        ("strategy ordering", strategy_ordering),
        ("best-of-n selection", best_of_n),
        ("service contract", service_contract),
        ("fifteen turn budget", turn_budget),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {name} ({secs:.2}s)"),
            Err(e) => {
                println!("FAIL {name} ({secs:.2}s): {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
