//! Fixture helpers shared by the service and CLI integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use ontorag_core::ingest::{ingest, IngestReport, SourceManifest};
use ontorag_core::llm::{ChatProvider, ChatRequest, FnProvider, LlmError};
use ontorag_core::{MappingLevel, Store};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

pub fn fixture_store() -> (Store, IngestReport) {
    let manifest = SourceManifest::load(fixture("manifest.json")).expect("fixture manifest");
    let store = Store::new();
    let report = ingest(&manifest, &store).expect("fixture ingest");
    (store, report)
}

/// `(source, target) -> level` straight from the hand-labelled table.
pub fn fixture_levels() -> HashMap<(String, String), MappingLevel> {
    std::fs::read_to_string(fixture("candidate_levels.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            ((f[0].to_string(), f[1].to_string()), f[3].parse().unwrap())
        })
        .collect()
}

pub fn level_count(level: MappingLevel) -> usize {
    fixture_levels().values().filter(|l| **l == level).count()
}

/// Text after the last `prefix` line's "(code " marker.
fn last_code(prompt: &str, prefix: &str) -> Option<String> {
    let line = prompt.lines().rev().find(|l| l.starts_with(prefix))?;
    let start = line.rfind("(code ")? + "(code ".len();
    Some(line[start..].trim_end_matches(')').to_string())
}

/// Answers level prompts with the fixture table's level for the pair,
/// reasoning prompts with a fixed sentence and anything else with a
/// fixed summary.
pub fn fixture_level_provider() -> FnProvider<impl Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync> {
    let levels = fixture_levels();
    FnProvider::new("fixture-levels", move |req: &ChatRequest| {
        let prompt = &req.messages.last().unwrap().content;
        if prompt.contains("Give reasoning") {
            return Ok("The labels name the same condition at this level of detail.".into());
        }
        match (last_code(prompt, "Original label:"), last_code(prompt, "Mapped label:")) {
            (Some(s), Some(t)) => Ok(levels
                .get(&(s.clone(), t.clone()))
                .map(|l| l.to_string())
                .unwrap_or_else(|| panic!("pair {s} -> {t} not in the fixture table"))),
            _ => Ok("Summary of the assessed mappings.".into()),
        }
    })
}

pub fn boxed<P: ChatProvider + 'static>(p: P) -> std::sync::Arc<dyn ChatProvider> {
    std::sync::Arc::new(p)
}

/// Writes a mock script whose keyed entries answer each fixture
/// candidate's zero-shot level prompt with its hand-labelled level. Every
/// other request gets a fixed reasoning sentence.
pub fn fixture_mock_script(store: &Store, dir: &std::path::Path) -> PathBuf {
    use ontorag_core::llm::prompt_fingerprint;
    use ontorag_core::reasoner::{level_prompt, StrategyConfig};
    use ontorag_core::review::{CandidateFilter, ReviewModel};

    let levels = fixture_levels();
    let scratch = tempfile::tempdir().unwrap();
    let model = ReviewModel::open(store, &scratch.path().join("log.jsonl"), None).unwrap();
    let mut keyed = serde_json::Map::new();
    for c in model.candidates(&CandidateFilter::default()) {
        let Some(pair) = c.pair_input() else { continue };
        let level = levels[&(c.source.code.clone(), c.target.code.clone())];
        let prompt = level_prompt(&pair, &StrategyConfig::default()).unwrap();
        keyed.insert(prompt_fingerprint(&prompt), level.to_string().into());
    }
    let path = dir.join("fixture-mock.json");
    let script = serde_json::json!({
        "keyed": keyed,
        "default": "The labels name the same condition at this level of detail.",
    });
    std::fs::write(&path, script.to_string()).unwrap();
    path
}
