//! Runs the question set through one fresh chat session per model config and
//! scores the answers against the reference answers.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::human::HumanReport;
use super::io::{Category, Question, RelevanceJudgment};
use super::semantic::{semantic_score, SemanticScore};
use super::{evaluate_retrieval, CategoryRow, RetrievalReport};
use crate::chat::{ChatEngine, ChatError};
use crate::embedding::Embedder;
use crate::ensemble::RetrievedContext;
use crate::error::{CoachError, Result};
use crate::generation::{PersonaConfig, WordLimit};
use crate::par::{self, Execution};
use crate::text::word_count;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub config_id: String,
    /// `None` selects the engine's default provider.
    #[serde(default)]
    pub provider_id: Option<String>,
    pub rag_enabled: bool,
}

impl ModelConfig {
    pub fn new(
        config_id: impl Into<String>,
        provider_id: Option<String>,
        rag_enabled: bool,
    ) -> Self {
        ModelConfig {
            config_id: config_id.into(),
            provider_id,
            rag_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRef {
    pub rank: usize,
    pub chunk_id: String,
    pub doc_id: String,
    pub heading_path: Vec<String>,
    pub fused_score: f64,
}

impl From<&RetrievedContext> for ContextRef {
    fn from(c: &RetrievedContext) -> Self {
        ContextRef {
            rank: c.rank,
            chunk_id: c.chunk_id.clone(),
            doc_id: c.doc_id.clone(),
            heading_path: c.heading_path.clone(),
            fused_score: c.fused_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub category: Category,
    pub answer: Option<String>,
    /// Provider or scoring failure; the question's cells are left out of the means.
    pub error: Option<String>,
    pub contexts: Vec<ContextRef>,
    pub latency_ms: Option<u64>,
    pub word_count: usize,
    #[serde(default)]
    pub semantic: Option<SemanticScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRun {
    pub config: ModelConfig,
    pub session_id: String,
    pub answers: Vec<AnswerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticConfigReport {
    pub model_config_id: String,
    pub precision: CategoryRow,
    pub recall: CategoryRow,
    pub f1: CategoryRow,
    /// Question ids with no score for this config.
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub semantic: Vec<SemanticConfigReport>,
    #[serde(default)]
    pub retrieval: Option<RetrievalReport>,
    #[serde(default)]
    pub human: Option<HumanReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub runs: Vec<ConfigRun>,
}

fn run_one(
    engine: &ChatEngine,
    questions: &[Question],
    config: &ModelConfig,
) -> Result<ConfigRun, ChatError> {
    let persona = PersonaConfig::default().with_word_limit(WordLimit::EXPERIMENT);
    let session = engine.create_session(persona, config.rag_enabled, config.provider_id.clone())?;
    let mut answers = Vec::with_capacity(questions.len());
    for q in questions {
        let record = match engine.post_message(&session.session_id, &q.text) {
            Ok(turn) => AnswerRecord {
                question_id: q.question_id.clone(),
                category: q.category,
                word_count: word_count(&turn.text),
                answer: Some(turn.text),
                error: None,
                contexts: turn.contexts_used.iter().map(ContextRef::from).collect(),
                latency_ms: turn.latency_ms,
                semantic: None,
            },
            Err(ChatError::Provider(e)) => {
                log::warn!("{}: {} failed: {e}", config.config_id, q.question_id);
                // the failed turn still carries the contexts retrieved for it
                let contexts = engine
                    .get_session(&session.session_id)?
                    .history
                    .last()
                    .map(|t| t.contexts_used.iter().map(ContextRef::from).collect())
                    .unwrap_or_default();
                AnswerRecord {
                    question_id: q.question_id.clone(),
                    category: q.category,
                    answer: None,
                    error: Some(e.to_string()),
                    contexts,
                    latency_ms: None,
                    word_count: 0,
                    semantic: None,
                }
            }
            Err(other) => return Err(other),
        };
        answers.push(record);
    }
    Ok(ConfigRun {
        config: config.clone(),
        session_id: session.session_id,
        answers,
    })
}

/// Posts every question, in order, into one fresh session per config.
/// Sessions use the experiment word limit. Configs may run concurrently.
pub fn collect_runs(
    engine: &ChatEngine,
    questions: &[Question],
    configs: &[ModelConfig],
    exec: Execution,
) -> Result<Vec<ConfigRun>, ChatError> {
    let mut ids = std::collections::HashSet::new();
    for c in configs {
        if !ids.insert(c.config_id.as_str()) {
            return Err(ChatError::InvalidInput(format!(
                "duplicate config id {}",
                c.config_id
            )));
        }
    }
    par::map(exec, configs, |c| run_one(engine, questions, c))
        .into_iter()
        .collect()
}

/// Fills in `semantic` on every answered record and aggregates per config.
pub fn score_runs(
    runs: &mut [ConfigRun],
    questions: &[Question],
    embedder: &dyn Embedder,
    exec: Execution,
) -> Result<Vec<SemanticConfigReport>> {
    let reference: HashMap<&str, &str> = questions
        .iter()
        .map(|q| (q.question_id.as_str(), q.reference_answer.as_str()))
        .collect();
    let mut reports = Vec::with_capacity(runs.len());
    for run in runs.iter_mut() {
        let scored = par::map(exec, &run.answers, |a| -> Result<Option<SemanticScore>> {
            let Some(answer) = &a.answer else {
                return Ok(None);
            };
            let r = reference.get(a.question_id.as_str()).ok_or_else(|| {
                CoachError::InvalidInput(format!("answer for unknown question {}", a.question_id))
            })?;
            match semantic_score(answer, r, embedder) {
                Ok(s) => Ok(Some(s)),
                Err(CoachError::InvalidInput(_)) => Ok(None),
                Err(e) => Err(e),
            }
        });
        let mut p = Vec::new();
        let mut r = Vec::new();
        let mut f = Vec::new();
        let mut failed = Vec::new();
        for (a, s) in run.answers.iter_mut().zip(scored) {
            a.semantic = s?;
            match a.semantic {
                Some(s) => {
                    p.push((a.category, s.precision));
                    r.push((a.category, s.recall));
                    f.push((a.category, s.f1));
                }
                None => failed.push(a.question_id.clone()),
            }
        }
        reports.push(SemanticConfigReport {
            model_config_id: run.config.config_id.clone(),
            precision: CategoryRow::from_values(&p),
            recall: CategoryRow::from_values(&r),
            f1: CategoryRow::from_values(&f),
            failed,
        });
    }
    Ok(reports)
}

/// Retrieval metrics from the contexts logged by the first RAG config.
pub fn retrieval_from_runs(
    runs: &[ConfigRun],
    questions: &[Question],
    judgments: &[RelevanceJudgment],
    k: usize,
) -> Result<Option<RetrievalReport>> {
    let Some(run) = runs.iter().find(|r| r.config.rag_enabled) else {
        return Ok(None);
    };
    let ranked: HashMap<String, Vec<String>> = run
        .answers
        .iter()
        .map(|a| {
            let mut ctx = a.contexts.clone();
            ctx.sort_by_key(|c| c.rank);
            (
                a.question_id.clone(),
                ctx.into_iter().map(|c| c.chunk_id).collect(),
            )
        })
        .collect();
    evaluate_retrieval(questions, &ranked, judgments, k).map(Some)
}

/// Collects runs, scores them and, when judgments are given, adds the retrieval block.
pub fn run_experiment(
    engine: &ChatEngine,
    questions: &[Question],
    configs: &[ModelConfig],
    token_embedder: &dyn Embedder,
    judgments: Option<&[RelevanceJudgment]>,
    k: usize,
    exec: Execution,
) -> Result<ExperimentOutput, ChatError> {
    let mut runs = collect_runs(engine, questions, configs, exec)?;
    let semantic = score_runs(&mut runs, questions, token_embedder, exec)?;
    let retrieval = match judgments {
        Some(j) => retrieval_from_runs(&runs, questions, j, k)?,
        None => None,
    };
    Ok(ExperimentOutput {
        report: ExperimentReport {
            semantic,
            retrieval,
            human: None,
        },
        runs,
    })
}

#[derive(Serialize)]
struct ContextLogRow<'a> {
    config_id: &'a str,
    question_id: &'a str,
    rank: usize,
    chunk_id: &'a str,
    doc_id: &'a str,
    heading_path: String,
    fused_score: f64,
}

/// Writes one CSV row per logged context, for relevance judging.
pub fn write_context_log(path: impl AsRef<Path>, runs: &[ConfigRun]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CoachError::parse(path.display().to_string(), e))?;
    for run in runs {
        for a in &run.answers {
            for c in &a.contexts {
                w.serialize(ContextLogRow {
                    config_id: &run.config.config_id,
                    question_id: &a.question_id,
                    rank: c.rank,
                    chunk_id: &c.chunk_id,
                    doc_id: &c.doc_id,
                    heading_path: c.heading_path.join(" > "),
                    fused_score: c.fused_score,
                })
                .map_err(|e| CoachError::parse(path.display().to_string(), e))?;
            }
        }
    }
    w.flush().map_err(|e| CoachError::io(path, e))
}

pub fn save_runs(path: impl AsRef<Path>, runs: &[ConfigRun]) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(runs).map_err(|e| CoachError::parse("runs", e))?;
    std::fs::write(path, json).map_err(|e| CoachError::io(path, e))
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<Vec<ConfigRun>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| CoachError::parse(path.display().to_string(), e))
}
