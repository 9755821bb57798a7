//! Self-play evaluation: a simulated user who knows the target image
//! answers the agent's questions for a fixed number of turns, and metrics
//! are recorded at the end of every turn.
//!
//! With scripted backends a run is a pure function of the case and the
//! configuration, and transcripts serialise byte-identically.

mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    belief_text, conversation_text, Action, Agent, AgentError, ConversationTurn, Observation, SessionState,
};
use crate::backends::BackendError;
use crate::belief_graph::{to_ground_truth, BeliefGraph, GraphError, GroundTruthState, TieBreak};
use crate::datasets::EvalCase;
use crate::metrics::{self, MetricValue, I2I_EXT, NLL, T2I_VQA_EXT, T2T_EMBED};
use crate::templates::TemplateName;

pub use report::{aggregate, write_reports, AggregateRow};

pub const DEFAULT_MAX_TURNS: usize = 15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("ground truth: {0}")]
    GroundTruth(#[from] GraphError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("writing reports: {0}")]
    Io(String),
}

fn all_metrics() -> Vec<String> {
    [NLL, T2T_EMBED, I2I_EXT, T2I_VQA_EXT].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayConfig {
    pub max_turns: usize,
    pub strategy: String,
    pub seed: u64,
    #[serde(default = "all_metrics")]
    pub metric_set: Vec<String>,
}

impl SelfPlayConfig {
    pub fn new(strategy: impl Into<String>) -> Self {
        Self { max_turns: DEFAULT_MAX_TURNS, strategy: strategy.into(), seed: 0, metric_set: all_metrics() }
    }

    fn wants(&self, metric: &str) -> bool {
        self.metric_set.iter().any(|m| m == metric)
    }
}

/// A user who holds the target image's caption and graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    pub ground_truth_prompt: String,
    pub ground_truth_graph: BeliefGraph,
}

impl SimulatedUser {
    /// Builds the user's graph by parsing the ground-truth prompt.
    pub fn new(agent: &Agent, ground_truth_prompt: &str) -> Result<Self, AgentError> {
        let graph = agent.parser().build_belief_graph(ground_truth_prompt)?;
        Ok(Self::with_graph(ground_truth_prompt, graph))
    }

    /// Uses an already known ground-truth graph.
    pub fn with_graph(ground_truth_prompt: &str, graph: BeliefGraph) -> Self {
        Self { ground_truth_prompt: ground_truth_prompt.trim().to_string(), ground_truth_graph: graph }
    }

    pub fn answer_question(
        &self,
        agent: &Agent,
        question: &str,
        history: &[ConversationTurn],
    ) -> Result<String, AgentError> {
        if question.trim().is_empty() {
            return Err(AgentError::EmptyInput("question"));
        }
        let request = agent.templates().render(
            TemplateName::SimulatedUser,
            &[
                ("ground_truth_prompt", &self.ground_truth_prompt),
                ("belief", &belief_text(&self.ground_truth_graph)),
                ("conversation", &conversation_text(history)),
                ("question", question.trim()),
            ],
        )?;
        let answer = agent.backends().llm.complete(&request)?;
        let answer = answer.split_whitespace().collect::<Vec<_>>().join(" ");
        if answer.is_empty() {
            return Err(AgentError::EmptyResponse("simulated user gave an empty answer"));
        }
        Ok(answer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLog {
    pub turn: usize,
    /// `ask`, `generate` or `none` when no action could be selected.
    pub action: String,
    pub question: String,
    pub answer: String,
    pub summary: String,
    pub merged_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub case_id: String,
    pub config: SelfPlayConfig,
    pub initial_metrics: BTreeMap<String, f64>,
    pub turns: Vec<TurnLog>,
    pub final_prompt: String,
    pub final_graph: BeliefGraph,
    /// Metrics that were requested but could not be computed, with the reason.
    pub omitted_metrics: BTreeMap<String, String>,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialize") + "\n"
    }

    pub fn final_metric(&self, id: &str) -> Option<f64> {
        self.turns.last().map_or(&self.initial_metrics, |t| &t.metrics).get(id).copied()
    }
}

/// Every recorded metric value, turn by turn, plus the omitted metrics.
pub fn metric_series(transcript: &Transcript) -> (Vec<MetricValue>, BTreeMap<String, String>) {
    let values = transcript
        .turns
        .iter()
        .flat_map(|t| t.metrics.iter().map(move |(id, v)| MetricValue { id: id.clone(), value: *v, turn: t.turn }))
        .collect();
    (values, transcript.omitted_metrics.clone())
}

struct Evaluator<'a> {
    agent: &'a Agent,
    case: &'a EvalCase,
    truth: GroundTruthState,
    questions: Vec<String>,
    config: &'a SelfPlayConfig,
    omitted: BTreeMap<String, String>,
}

impl<'a> Evaluator<'a> {
    fn new(agent: &'a Agent, case: &'a EvalCase, config: &'a SelfPlayConfig) -> Result<Self, SimError> {
        let truth = to_ground_truth(&case.ground_truth_graph, TieBreak::FirstListed)?;
        let questions = metrics::ground_truth_questions(&truth);
        let mut omitted = BTreeMap::new();
        let scorer = agent.backends().scorer.is_some();
        for id in [I2I_EXT, T2I_VQA_EXT] {
            if config.wants(id) && !scorer {
                omitted.insert(id.to_string(), "no scorer backend configured".to_string());
            }
        }
        if config.wants(I2I_EXT) && scorer && case.image_ref.is_none() {
            omitted.insert(I2I_EXT.to_string(), "case has no reference image".to_string());
        }
        Ok(Self { agent, case, truth, questions, config, omitted })
    }

    fn evaluate(&mut self, state: &SessionState) -> Result<BTreeMap<String, f64>, BackendError> {
        let mut out = BTreeMap::new();
        let backends = self.agent.backends();
        if self.config.wants(NLL) {
            out.insert(NLL.to_string(), metrics::nll(&state.graph, &self.truth));
        }
        if self.config.wants(T2T_EMBED) {
            let v = metrics::t2t_similarity(backends, &state.merged_prompt, &self.case.ground_truth_caption)?;
            out.insert(T2T_EMBED.to_string(), v);
        }
        let wants_image = [I2I_EXT, T2I_VQA_EXT].iter().any(|m| self.config.wants(m) && !self.omitted.contains_key(*m));
        if let (true, Some(scorer)) = (wants_image, backends.scorer.as_ref()) {
            let image = backends.generate_image(&state.merged_prompt, self.config.seed)?;
            if self.config.wants(T2I_VQA_EXT) && !self.questions.is_empty() {
                let scores =
                    self.questions.iter().map(|q| scorer.score_image(&image, q)).collect::<Result<Vec<_>, _>>()?;
                out.insert(T2I_VQA_EXT.to_string(), scores.iter().sum::<f64>() / scores.len() as f64);
            }
            if let (true, Some(reference)) = (self.config.wants(I2I_EXT), self.case.image_ref.as_deref()) {
                match scorer.image_similarity(&image, reference)? {
                    Some(v) => {
                        out.insert(I2I_EXT.to_string(), v);
                    }
                    None => {
                        self.omitted.insert(I2I_EXT.to_string(), "scorer does not support image similarity".into());
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs one case for exactly `config.max_turns` turns.
pub fn run_self_play(agent: &Agent, case: &EvalCase, config: &SelfPlayConfig) -> Result<Transcript, SimError> {
    if config.max_turns == 0 {
        return Err(SimError::Config("max_turns must be at least 1".into()));
    }
    let user = SimulatedUser::with_graph(&case.ground_truth_caption, case.ground_truth_graph.clone());
    let mut eval = Evaluator::new(agent, case, config)?;
    let mut state = agent.start_session(&case.starting_prompt, &config.strategy)?;
    let initial_metrics = eval.evaluate(&state)?;
    let mut previous = initial_metrics.clone();
    let mut turns = Vec::with_capacity(config.max_turns);

    for turn in 1..=config.max_turns {
        let mut log = TurnLog {
            turn,
            action: "none".into(),
            question: String::new(),
            answer: String::new(),
            summary: String::new(),
            merged_prompt: String::new(),
            degraded: None,
            metrics: BTreeMap::new(),
        };
        match step(agent, &user, &state, &mut log) {
            Ok(next) => state = next,
            Err(e) if e.is_degradable() => log.degraded = Some(e.to_string()),
            Err(e) => return Err(e.into()),
        }
        log.merged_prompt = state.merged_prompt.clone();
        log.metrics = if log.degraded.is_some() {
            previous.clone()
        } else {
            match eval.evaluate(&state) {
                Ok(m) => m,
                Err(e) => {
                    log.degraded = Some(format!("metrics: {e}"));
                    previous.clone()
                }
            }
        };
        tracing::debug!(case = %case.case_id, turn, action = %log.action, "self-play turn");
        previous = log.metrics.clone();
        turns.push(log);
    }

    Ok(Transcript {
        case_id: case.case_id.clone(),
        config: config.clone(),
        initial_metrics,
        turns,
        final_prompt: state.merged_prompt.clone(),
        final_graph: state.graph,
        omitted_metrics: eval.omitted,
    })
}

/// Select, verbalise, answer, transition.
fn step(agent: &Agent, user: &SimulatedUser, state: &SessionState, log: &mut TurnLog) -> Result<SessionState, AgentError> {
    let action = agent.select_action(state)?;
    let next = match &action {
        Action::AskQuestion { question_text, .. } => {
            log.action = "ask".into();
            log.question = question_text.clone();
            let answer = user.answer_question(agent, question_text, &state.history)?;
            log.answer = answer.clone();
            agent.transition(state, &action, &Observation::AnswerText { text: answer })?
        }
        _ => {
            log.action = "generate".into();
            agent.transition(state, &action, &Observation::NoOp)?
        }
    };
    let last = next.last_turn().expect("transition appends a turn");
    log.summary = last.declarative_summary.clone();
    log.degraded = last.degraded.clone();
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: SelfPlayConfig,
    /// In input order.
    pub transcripts: Vec<Transcript>,
    pub failures: Vec<CaseFailure>,
}

/// Runs every case, `jobs` at a time. Failed cases are reported, not fatal.
pub fn run_batch(agent: &Agent, cases: &[EvalCase], config: &SelfPlayConfig, jobs: usize) -> Result<BatchReport, SimError> {
    if cases.is_empty() {
        return Err(SimError::Config("no cases to run".into()));
    }
    if config.max_turns == 0 {
        return Err(SimError::Config("max_turns must be at least 1".into()));
    }
    agent.strategy(&config.strategy)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let results: Vec<_> = pool.install(|| cases.par_iter().map(|c| (c, run_self_play(agent, c, config))).collect());
    let mut report = BatchReport { config: config.clone(), transcripts: Vec::new(), failures: Vec::new() };
    for (case, result) in results {
        match result {
            Ok(t) => report.transcripts.push(t),
            Err(e) => {
                tracing::warn!(case = %case.case_id, error = %e, "case failed");
                report.failures.push(CaseFailure { case_id: case.case_id.clone(), error: e.to_string() });
            }
        }
    }
    Ok(report)
}
