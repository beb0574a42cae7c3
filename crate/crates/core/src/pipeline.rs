//! One question end to end: generate and run a query, grade the code pairs
//! it returns, then summarize.

use serde::{Deserialize, Serialize};

use crate::llm::{ChatProvider, LlmError};
use crate::nl2sparql::{self, ExampleBank, GenerationTrace, Nl2SparqlConfig, Nl2SparqlError};
use crate::reasoner::{self, Assessment, LabeledCode, PairFailure, PairInput, ReasonerError, StrategyConfig};
use crate::store::{ResultTable, Store};

pub const SOURCE_CODE: &str = "source_code";
pub const SOURCE_LABEL: &str = "source_label";
pub const TARGET_CODE: &str = "target_code";
pub const TARGET_LABEL: &str = "target_label";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Generation(#[from] Nl2SparqlError),
    #[error("assessment failed: {0}")]
    Assessment(ReasonerError),
    #[error("summary failed: {0}")]
    Summary(ReasonerError),
}

impl PipelineError {
    /// The provider error behind this failure, if any.
    pub fn provider_error(&self) -> Option<&LlmError> {
        match self {
            PipelineError::Generation(Nl2SparqlError::Provider { source, .. }) => Some(source),
            PipelineError::Assessment(ReasonerError::Provider(e))
            | PipelineError::Summary(ReasonerError::Provider(e)) => Some(e),
            _ => None,
        }
    }

    pub fn trace(&self) -> Option<&GenerationTrace> {
        match self {
            PipelineError::Generation(e) => e.trace(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub nl2sparql: Nl2SparqlConfig,
    pub strategy: StrategyConfig,
    /// Parallel reasoner calls per question.
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub question: String,
    pub sparql: String,
    pub attempts: usize,
    pub result: ResultTable,
    pub assessments: Vec<Assessment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assessment_failures: Vec<PairFailure>,
    pub summary: Option<String>,
    pub trace: GenerationTrace,
}

/// Code pairs in a result table, in row order without repeats. Needs the
/// `source_code` and `target_code` columns; labels fall back to codes.
pub fn detect_pairs(table: &ResultTable) -> Vec<PairInput> {
    if table.column(SOURCE_CODE).is_none() || table.column(TARGET_CODE).is_none() {
        return Vec::new();
    }
    let mut out: Vec<PairInput> = Vec::new();
    for row in 0..table.rows.len() {
        let (Some(sc), Some(tc)) = (table.get(row, SOURCE_CODE), table.get(row, TARGET_CODE)) else {
            continue;
        };
        let pair = PairInput {
            queried: LabeledCode::with_code(table.get(row, SOURCE_LABEL).unwrap_or(sc), sc),
            retrieved: LabeledCode::with_code(table.get(row, TARGET_LABEL).unwrap_or(tc), tc),
            context: None,
        };
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

pub fn run_query(
    question: &str,
    store: &Store,
    provider: &dyn ChatProvider,
    bank: &ExampleBank,
    config: &PipelineConfig,
) -> Result<QueryOutcome, PipelineError> {
    let answer = nl2sparql::answer(question, store, provider, bank, &config.nl2sparql)?;
    let pairs = detect_pairs(&answer.result);
    let mut outcome = QueryOutcome {
        question: question.to_string(),
        sparql: answer.sparql,
        attempts: answer.trace.attempts.len(),
        result: answer.result,
        assessments: Vec::new(),
        assessment_failures: Vec::new(),
        summary: None,
        trace: answer.trace,
    };
    if pairs.is_empty() {
        return Ok(outcome);
    }
    let batch = reasoner::assess_pairs(&pairs, &config.strategy, provider, config.workers.max(1))
        .map_err(PipelineError::Assessment)?;
    if batch.assessments.is_empty() {
        if let Some((_, e)) = batch.errors.first() {
            return Err(PipelineError::Assessment(e.clone()));
        }
    }
    outcome.assessment_failures = batch.failures();
    outcome.assessments = batch.assessments.into_iter().map(|(_, a)| a).collect();
    outcome.summary = Some(
        reasoner::summarize(question, &outcome.assessments, config.strategy.temperature, provider)
            .map_err(PipelineError::Summary)?,
    );
    Ok(outcome)
}
