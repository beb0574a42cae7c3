//! Python bindings. Structured results cross the boundary as plain
//! dicts and lists decoded from their JSON form.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use ontorag_core::eval;
use ontorag_core::ingest::{ingest, SourceManifest};
use ontorag_core::llm::{ChatProvider, MockScript, ProviderConfig, ScriptedMock};
use ontorag_core::nl2sparql::ExampleBank;
use ontorag_core::pipeline::{run_query, PipelineConfig};
use ontorag_core::reasoner::{self, PairInput, StrategyConfig, StrategyKind};
use ontorag_core::review::{Action, CandidateFilter, ReviewModel, Status};
use ontorag_core::MappingLevel;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn runtime<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn value<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// An in-memory quad store.
#[pyclass(name = "Store")]
struct PyStore {
    inner: Arc<ontorag_core::Store>,
}

#[pymethods]
impl PyStore {
    #[new]
    fn new() -> Self {
        PyStore {
            inner: Arc::new(ontorag_core::Store::new()),
        }
    }

    /// Loads an N-Quads file.
    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        let store = ontorag_core::Store::open(&path).map_err(runtime)?;
        Ok(PyStore { inner: Arc::new(store) })
    }

    fn save(&self, path: PathBuf) -> PyResult<usize> {
        self.inner.save(&path).map_err(runtime)
    }

    /// Ingests every source in a manifest and returns the report.
    fn ingest<'py>(&self, py: Python<'py>, manifest: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let manifest = SourceManifest::load(&manifest).map_err(value)?;
        let report = py.detach(|| ingest(&manifest, &self.inner)).map_err(runtime)?;
        to_py(py, &report)
    }

    fn query<'py>(&self, py: Python<'py>, sparql: &str) -> PyResult<Bound<'py, PyAny>> {
        let table = py.detach(|| self.inner.query(sparql)).map_err(value)?;
        to_py(py, &table)
    }

    fn graphs(&self) -> Vec<String> {
        self.inner.graphs()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A chat model. Build one from a mock script or from the environment.
#[pyclass(name = "Provider")]
struct PyProvider {
    inner: Arc<dyn ChatProvider>,
    mock: Option<Arc<ScriptedMock>>,
}

#[pymethods]
impl PyProvider {
    /// Replays `ordered` responses in turn. `keyed` maps request
    /// fingerprints to responses; `default` answers anything else.
    #[staticmethod]
    #[pyo3(signature = (ordered=None, keyed=None, default=None))]
    fn mock(
        ordered: Option<Vec<String>>,
        keyed: Option<std::collections::BTreeMap<String, String>>,
        default: Option<String>,
    ) -> Self {
        let mock = Arc::new(ScriptedMock::new(MockScript {
            ordered,
            keyed,
            default,
        }));
        PyProvider {
            inner: mock.clone(),
            mock: Some(mock),
        }
    }

    /// Reads the endpoint, model and API key from ONTORAG_LLM_* variables.
    #[staticmethod]
    fn from_env() -> PyResult<Self> {
        let mut config = ProviderConfig::default();
        config.apply_env();
        Ok(PyProvider {
            inner: config.build().map_err(value)?,
            mock: None,
        })
    }

    /// Prompts seen so far; empty for real providers.
    fn transcript<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let entries = self.mock.as_ref().map(|m| m.transcript()).unwrap_or_default();
        to_py(py, &entries)
    }

    fn model_id(&self) -> String {
        self.inner.model_id().to_string()
    }
}

fn strategy(kind: &str, temperature: f64) -> PyResult<StrategyConfig> {
    let kind: StrategyKind = kind.parse().map_err(value)?;
    Ok(StrategyConfig::new(kind, temperature))
}

/// Fraction of gold codes found among the predicted ones.
#[pyfunction]
fn score_direct(gold: Vec<String>, predicted: Vec<String>) -> PyResult<f64> {
    let gold: BTreeSet<String> = gold.into_iter().collect();
    let predicted: BTreeSet<String> = predicted.into_iter().collect();
    eval::score_direct(&gold, &predicted).map_err(value)
}

/// The mapping level named in a reply, or None.
#[pyfunction]
#[pyo3(signature = (text, last=false))]
fn parse_level(text: &str, last: bool) -> Option<String> {
    reasoner::parse_level(text, last).map(|l| l.to_string())
}

/// Grades one pair of labels and explains the grade.
#[pyfunction]
#[pyo3(signature = (desc1, desc2, provider, strategy_kind="zero-shot", temperature=0.2))]
fn assess<'py>(
    py: Python<'py>,
    desc1: &str,
    desc2: &str,
    provider: &PyProvider,
    strategy_kind: &str,
    temperature: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = strategy(strategy_kind, temperature)?;
    let pair = PairInput::labels(desc1, desc2);
    let provider = provider.inner.clone();
    let assessment = py
        .detach(|| reasoner::assess(&pair, &config, provider.as_ref()))
        .map_err(runtime)?;
    to_py(py, &assessment)
}

/// Answers a question over the store: generates SPARQL, runs it and
/// grades every mapping in the result.
#[pyfunction]
#[pyo3(signature = (question, store, provider, strategy_kind="zero-shot", temperature=0.2))]
fn query<'py>(
    py: Python<'py>,
    question: &str,
    store: &PyStore,
    provider: &PyProvider,
    strategy_kind: &str,
    temperature: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = PipelineConfig {
        strategy: strategy(strategy_kind, temperature)?,
        ..PipelineConfig::default()
    };
    let (store, provider) = (store.inner.clone(), provider.inner.clone());
    let outcome = py
        .detach(|| run_query(question, &store, provider.as_ref(), &ExampleBank::default(), &config))
        .map_err(runtime)?;
    to_py(py, &outcome)
}

fn parse_opt<T: std::str::FromStr>(s: Option<&str>) -> PyResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    s.map(|s| s.parse().map_err(value)).transpose()
}

/// Mapping candidates with a persistent decision log.
#[pyclass(name = "ReviewModel")]
struct PyReviewModel {
    inner: ReviewModel,
}

#[pymethods]
impl PyReviewModel {
    #[new]
    #[pyo3(signature = (store, log_path, cache_path=None))]
    fn new(store: &PyStore, log_path: PathBuf, cache_path: Option<PathBuf>) -> PyResult<Self> {
        let inner = ReviewModel::open(&store.inner, &log_path, cache_path.as_deref()).map_err(runtime)?;
        Ok(PyReviewModel { inner })
    }

    #[pyo3(signature = (level=None, status=None, page=1, page_size=50))]
    fn list<'py>(
        &self,
        py: Python<'py>,
        level: Option<&str>,
        status: Option<&str>,
        page: usize,
        page_size: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let filter = CandidateFilter {
            level: parse_opt::<MappingLevel>(level)?,
            status: parse_opt::<Status>(status)?,
        };
        let page = self.inner.list(&filter, page, page_size).map_err(value)?;
        to_py(py, &page)
    }

    #[pyo3(signature = (candidate_id, action, reviewer, note=None))]
    fn decide<'py>(
        &self,
        py: Python<'py>,
        candidate_id: &str,
        action: &str,
        reviewer: &str,
        note: Option<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let action: Action = action.parse().map_err(value)?;
        let candidate = self.inner.decide(candidate_id, action, reviewer, note).map_err(value)?;
        to_py(py, &candidate)
    }

    #[pyo3(signature = (level, action, reviewer, note=None))]
    fn bulk_decide(&self, level: &str, action: &str, reviewer: &str, note: Option<String>) -> PyResult<usize> {
        let level: MappingLevel = level.parse().map_err(value)?;
        let action: Action = action.parse().map_err(value)?;
        self.inner.bulk_decide(level, action, reviewer, note).map_err(value)
    }

    /// Grades candidates that have no assessment yet.
    #[pyo3(signature = (provider, strategy_kind="zero-shot", temperature=0.2, workers=1))]
    fn assess_missing<'py>(
        &self,
        py: Python<'py>,
        provider: &PyProvider,
        strategy_kind: &str,
        temperature: f64,
        workers: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let config = strategy(strategy_kind, temperature)?;
        let provider = provider.inner.clone();
        let run = py
            .detach(|| self.inner.assess_missing(&config, provider.as_ref(), workers))
            .map_err(runtime)?;
        to_py(py, &run)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats())
    }

    /// Writes accepted mappings as N-Quads and returns the statement count.
    fn export_refined(&self, path: PathBuf) -> PyResult<usize> {
        self.inner.export_refined(&path).map_err(runtime)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pymodule]
fn ontorag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStore>()?;
    m.add_class::<PyProvider>()?;
    m.add_class::<PyReviewModel>()?;
    m.add_function(wrap_pyfunction!(score_direct, m)?)?;
    m.add_function(wrap_pyfunction!(parse_level, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(query, m)?)?;
    Ok(())
}
