//! Question to validated SPARQL: prompt assembly, completion, extraction
//! and a bounded self-validation retry loop.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{ChatProvider, ChatRequest, LlmError, DEFAULT_TEMPERATURE};
use crate::store::sparql::{self, QueryError};
use crate::store::{ResultTable, SchemaSummary, Store, ValidateOptions, ValidationIssue};
use crate::template;

pub const DEFAULT_TEMPLATE: &str = include_str!("../prompts/nl2sparql_template.txt");
pub const DEFAULT_INSTRUCTIONS: &str = include_str!("../prompts/nl2sparql_instructions.txt");
pub const DEFAULT_EXAMPLES: &str = include_str!("../prompts/nl2sparql_examples.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub nlq: String,
    pub sparql: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleBank {
    pub examples: Vec<Example>,
}

impl ExampleBank {
    pub fn from_json(text: &str) -> Result<Self, Nl2SparqlError> {
        serde_json::from_str(text).map_err(|e| Nl2SparqlError::Config(format!("example bank: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Nl2SparqlError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Nl2SparqlError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Default for ExampleBank {
    fn default() -> Self {
        Self::from_json(DEFAULT_EXAMPLES).expect("bundled example bank parses")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nl2SparqlConfig {
    pub template: String,
    pub instructions: String,
    pub max_attempts: usize,
    /// Append the previous attempt's query and its problems on retries.
    pub feedback: bool,
    pub validation: ValidateOptions,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Nl2SparqlConfig {
    fn default() -> Self {
        Nl2SparqlConfig {
            template: DEFAULT_TEMPLATE.into(),
            instructions: DEFAULT_INSTRUCTIONS.trim_end().into(),
            max_attempts: 5,
            feedback: true,
            validation: ValidateOptions::default(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 1024,
        }
    }
}

/// How an attempt's extracted text fared against the parser.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed,
    NoQueryFound,
    SyntaxError { position: usize, message: String },
    Unsupported { feature: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub raw_response: String,
    pub extracted_sparql: Option<String>,
    pub parse_outcome: ParseOutcome,
    pub validation_issues: Vec<ValidationIssue>,
}

impl Attempt {
    pub fn is_clean(&self) -> bool {
        self.parse_outcome == ParseOutcome::Parsed && self.validation_issues.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub attempts: Vec<Attempt>,
    pub final_sparql: Option<String>,
    pub succeeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum Nl2SparqlError {
    #[error("no SPARQL query found in the response")]
    NoQueryFound,
    #[error("no valid query after {} attempts", .0.attempts.len())]
    ExhaustedAttempts(GenerationTrace),
    #[error("provider failed: {source}")]
    Provider {
        #[source]
        source: LlmError,
        trace: GenerationTrace,
    },
    #[error("query execution failed: {source}")]
    Execution {
        #[source]
        source: QueryError,
        trace: GenerationTrace,
    },
    #[error("configuration: {0}")]
    Config(String),
}

impl Nl2SparqlError {
    pub fn trace(&self) -> Option<&GenerationTrace> {
        match self {
            Nl2SparqlError::ExhaustedAttempts(t)
            | Nl2SparqlError::Provider { trace: t, .. }
            | Nl2SparqlError::Execution { trace: t, .. } => Some(t),
            _ => None,
        }
    }
}

fn render_examples(examples: &[Example]) -> String {
    examples
        .iter()
        .map(|e| format!("Question: {}\nSPARQL:\n```sparql\n{}\n```", e.nlq, e.sparql.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Fills the template with instructions, the schema listing, the examples
/// and the question, in that order.
pub fn build_prompt(nlq: &str, schema: &SchemaSummary, bank: &ExampleBank, config: &Nl2SparqlConfig) -> String {
    let graphs = schema.render();
    let examples = render_examples(&bank.examples);
    template::render(
        &config.template,
        &[
            ("instructions", config.instructions.as_str()),
            ("graph_sources", graphs.as_str()),
            ("examples", examples.as_str()),
            ("input", nlq),
        ],
    )
    .trim_end()
    .to_string()
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").unwrap());
static KEYWORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(PREFIX|SELECT|ASK)\b").unwrap());

/// Pulls the query out of a chatty response: the first fenced block that
/// holds a query (from its first keyword on), otherwise everything from
/// the first PREFIX/SELECT/ASK keyword to the end.
pub fn extract_sparql(text: &str) -> Result<String, Nl2SparqlError> {
    for block in FENCE.captures_iter(text) {
        let body = block.get(1).unwrap().as_str();
        if let Some(m) = KEYWORD.find(body) {
            return Ok(body[m.start()..].trim().to_string());
        }
    }
    match KEYWORD.find(text) {
        Some(m) => Ok(text[m.start()..].trim().to_string()),
        None => Err(Nl2SparqlError::NoQueryFound),
    }
}

fn feedback(previous: &Attempt) -> String {
    let mut out = String::from("\n\n### Previous attempt\n");
    match &previous.extracted_sparql {
        Some(q) => out.push_str(&format!("Your previous query was:\n```sparql\n{q}\n```\n")),
        None => out.push_str("Your previous answer did not contain a SPARQL query.\n"),
    }
    match &previous.parse_outcome {
        ParseOutcome::Parsed => {
            out.push_str("It parsed, but refers to things that do not exist in the knowledge graph:\n");
            for issue in &previous.validation_issues {
                out.push_str(&format!("- {issue}\n"));
            }
            out.push_str("Use only the graphs and predicates listed under \"Graph sources\".\n");
        }
        ParseOutcome::SyntaxError { position, message } => {
            out.push_str(&format!("It has a syntax error at offset {position}: {message}\n"));
        }
        ParseOutcome::Unsupported { feature } => {
            out.push_str(&format!("It uses {feature}, which is not supported.\n"));
        }
        ParseOutcome::NoQueryFound => {}
    }
    out.push_str("Write a corrected query.");
    out
}

/// Checks one response: extract, parse, validate.
pub fn check_response(raw: &str, schema: &SchemaSummary, options: ValidateOptions) -> Attempt {
    let mut attempt = Attempt {
        raw_response: raw.to_string(),
        extracted_sparql: None,
        parse_outcome: ParseOutcome::NoQueryFound,
        validation_issues: Vec::new(),
    };
    let Ok(query) = extract_sparql(raw) else {
        return attempt;
    };
    attempt.parse_outcome = match sparql::parse(&query) {
        Ok(ast) => {
            attempt.validation_issues = schema.validate(&ast, options).issues;
            ParseOutcome::Parsed
        }
        Err(QueryError::SparqlSyntax { position, message }) => ParseOutcome::SyntaxError { position, message },
        Err(QueryError::UnsupportedFeature(feature)) => ParseOutcome::Unsupported { feature },
        Err(QueryError::UnknownGraph(g)) => ParseOutcome::SyntaxError {
            position: 0,
            message: format!("unknown graph {g}"),
        },
    };
    attempt.extracted_sparql = Some(query);
    attempt
}

/// Generate, check, and retry with corrective context until a query parses
/// and validates or `max_attempts` provider calls have been made.
pub fn generate(
    nlq: &str,
    schema: &SchemaSummary,
    bank: &ExampleBank,
    provider: &dyn ChatProvider,
    config: &Nl2SparqlConfig,
) -> Result<GenerationTrace, Nl2SparqlError> {
    if config.max_attempts == 0 {
        return Err(Nl2SparqlError::Config("max_attempts must be at least 1".into()));
    }
    let base = build_prompt(nlq, schema, bank, config);
    let mut trace = GenerationTrace::default();
    while trace.attempts.len() < config.max_attempts {
        let prompt = match (config.feedback, trace.attempts.last()) {
            (true, Some(prev)) => format!("{base}{}", feedback(prev)),
            _ => base.clone(),
        };
        let request = ChatRequest {
            max_tokens: config.max_tokens,
            ..ChatRequest::user(prompt).with_temperature(config.temperature)
        };
        let raw = match provider.complete(&request) {
            Ok(raw) => raw,
            Err(source) => return Err(Nl2SparqlError::Provider { source, trace }),
        };
        let attempt = check_response(&raw, schema, config.validation);
        log::debug!(
            "attempt {} for {nlq:?}: {:?}, {} issues",
            trace.attempts.len() + 1,
            attempt.parse_outcome,
            attempt.validation_issues.len()
        );
        let clean = attempt.is_clean();
        let query = attempt.extracted_sparql.clone();
        trace.attempts.push(attempt);
        if clean {
            trace.final_sparql = query;
            trace.succeeded = true;
            return Ok(trace);
        }
    }
    Err(Nl2SparqlError::ExhaustedAttempts(trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub sparql: String,
    pub result: ResultTable,
    pub trace: GenerationTrace,
}

/// Generates a query against the store's current schema and runs it.
pub fn answer(
    nlq: &str,
    store: &Store,
    provider: &dyn ChatProvider,
    bank: &ExampleBank,
    config: &Nl2SparqlConfig,
) -> Result<Answer, Nl2SparqlError> {
    let schema = store.introspect();
    let mut trace = generate(nlq, &schema, bank, provider, config)?;
    let sparql = trace.final_sparql.clone().expect("succeeded trace has a query");
    match store.query(&sparql) {
        Ok(result) => Ok(Answer { sparql, result, trace }),
        Err(source) => {
            trace.execution_error = Some(source.to_string());
            Err(Nl2SparqlError::Execution { source, trace })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedMock;
    use crate::store::{Quad, Term};

    fn store() -> Store {
        let s = Store::new();
        let c = Term::iri("urn:ontorag:concept:icd9cm:5849");
        let g = "urn:ontorag:graph:icd9cm";
        s.insert(&Quad::new(c.clone(), "urn:ontorag:p:code", Term::literal("5849"), g));
        s.insert(&Quad::new(
            c,
            "urn:ontorag:p:label",
            Term::literal("Acute kidney failure, unspecified"),
            g,
        ));
        s
    }

    const GOOD: &str = "SELECT ?l WHERE { GRAPH <urn:ontorag:graph:icd9cm> { ?c <urn:ontorag:p:code> \"5849\" . ?c <urn:ontorag:p:label> ?l } }";

    #[test]
    fn extraction_cases() {
        assert_eq!(
            extract_sparql("Sure! Here is your query:\n```\nSELECT ?x WHERE { ?x ?p ?o }\n```").unwrap(),
            "SELECT ?x WHERE { ?x ?p ?o }"
        );
        assert_eq!(
            extract_sparql("SELECT ?x WHERE { ?x ?p ?o }").unwrap(),
            "SELECT ?x WHERE { ?x ?p ?o }"
        );
        assert!(matches!(
            extract_sparql("I cannot help with that."),
            Err(Nl2SparqlError::NoQueryFound)
        ));
        assert_eq!(
            extract_sparql("```sparql\nPREFIX p: <urn:ontorag:p:>\nASK { ?s p:code \"1\" }\n```\nDone.").unwrap(),
            "PREFIX p: <urn:ontorag:p:>\nASK { ?s p:code \"1\" }"
        );
        // a fence without a query is skipped
        assert_eq!(
            extract_sparql("```text\nnothing\n```\n```\nselect * where { ?s ?p ?o }\n```").unwrap(),
            "select * where { ?s ?p ?o }"
        );
        // keywords inside identifiers do not count
        assert!(extract_sparql("preselected asking").is_err());
    }

    #[test]
    fn prompt_order_and_determinism() {
        let schema = store().introspect();
        let bank = ExampleBank::default();
        let config = Nl2SparqlConfig::default();
        let nlq = "What is the label of ICD-9 code 584.9?";
        let p = build_prompt(nlq, &schema, &bank, &config);
        assert_eq!(p, build_prompt(nlq, &schema, &bank, &config));
        assert!(p.ends_with(&format!("### Input\n{nlq}")));
        let positions: Vec<usize> = ["Rules:", "### Graph sources", "### Examples", "### Input"]
            .iter()
            .map(|m| p.find(m).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        for e in &bank.examples {
            assert!(p.contains(e.sparql.trim()));
        }
        assert!(p.contains("<urn:ontorag:graph:icd9cm>"));
        assert!(build_prompt("", &schema, &bank, &config).ends_with("### Input"));
    }

    #[test]
    fn succeeds_first_try() {
        let s = store();
        let mock = ScriptedMock::ordered([GOOD]);
        let trace = generate(
            "q",
            &s.introspect(),
            &ExampleBank::default(),
            &mock,
            &Nl2SparqlConfig::default(),
        )
        .unwrap();
        assert!(trace.succeeded);
        assert_eq!(trace.attempts.len(), 1);
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn retries_with_feedback() {
        let s = store();
        let bad = "SELECT ?l WHERE { GRAPH <urn:ontorag:graph:icd9cm> { ?c <urn:ontorag:p:banana> ?l } }";
        let mock = ScriptedMock::ordered(["SELECT ?x WHERE { ?x", bad, GOOD]);
        let trace = generate(
            "q",
            &s.introspect(),
            &ExampleBank::default(),
            &mock,
            &Nl2SparqlConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.attempts.len(), 3);
        assert!(matches!(
            trace.attempts[0].parse_outcome,
            ParseOutcome::SyntaxError { .. }
        ));
        assert_eq!(trace.attempts[1].validation_issues.len(), 1);
        let prompts: Vec<String> = mock
            .transcript()
            .into_iter()
            .map(|t| t.messages[0].content.clone())
            .collect();
        assert!(!prompts[0].contains("### Previous attempt"));
        assert!(prompts[1].contains("syntax error"));
        assert!(prompts[2].contains("urn:ontorag:p:banana"));
        assert!(prompts[2].contains("do not exist"));
    }

    #[test]
    fn feedback_can_be_disabled() {
        let s = store();
        let mock = ScriptedMock::ordered(["nope", GOOD]);
        let config = Nl2SparqlConfig {
            feedback: false,
            ..Nl2SparqlConfig::default()
        };
        generate("q", &s.introspect(), &ExampleBank::default(), &mock, &config).unwrap();
        let t = mock.transcript();
        assert_eq!(t[0].messages, t[1].messages);
    }

    #[test]
    fn exhausts_at_cap() {
        let s = store();
        let mock = ScriptedMock::ordered(["garbage", "garbage", "garbage"]);
        let config = Nl2SparqlConfig {
            max_attempts: 3,
            ..Nl2SparqlConfig::default()
        };
        match generate("q", &s.introspect(), &ExampleBank::default(), &mock, &config) {
            Err(Nl2SparqlError::ExhaustedAttempts(trace)) => {
                assert_eq!(trace.attempts.len(), 3);
                assert!(!trace.succeeded);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn provider_failure_carries_empty_trace() {
        let s = store();
        let mock = ScriptedMock::ordered(Vec::<String>::new());
        match answer("q", &s, &mock, &ExampleBank::default(), &Nl2SparqlConfig::default()) {
            Err(Nl2SparqlError::Provider { source, trace }) => {
                assert_eq!(source, LlmError::MockExhausted);
                assert!(trace.attempts.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn answer_runs_the_query() {
        let s = store();
        let mock = ScriptedMock::ordered([format!("Here you go:\n```sparql\n{GOOD}\n```")]);
        let a = answer("q", &s, &mock, &ExampleBank::default(), &Nl2SparqlConfig::default()).unwrap();
        assert_eq!(a.result.rows.len(), 1);
        assert_eq!(a.result.get(0, "l"), Some("Acute kidney failure, unspecified"));

        let empty = "SELECT ?l WHERE { GRAPH <urn:ontorag:graph:icd9cm> { ?c <urn:ontorag:p:code> \"9999\" . ?c <urn:ontorag:p:label> ?l } }";
        let a = answer(
            "q",
            &s,
            &ScriptedMock::ordered([empty]),
            &ExampleBank::default(),
            &Nl2SparqlConfig::default(),
        )
        .unwrap();
        assert!(a.trace.succeeded);
        assert!(a.result.rows.is_empty());
    }
}
