use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{fingerprint, prompt_fingerprint, ChatProvider, ChatRequest, LlmError, Message};

pub(super) const MOCK_MODEL: &str = "scripted-mock";

/// Script file contents: `{"ordered": [...]}` or `{"keyed": {...}, "default": ...}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordered: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyed: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub response: Option<String>,
}

struct State {
    queue: VecDeque<String>,
    transcript: Vec<TranscriptEntry>,
}

/// Deterministic provider replaying a script. The ordered queue is consumed
/// under a lock, so concurrent callers are served one at a time.
pub struct ScriptedMock {
    keyed: BTreeMap<String, String>,
    default: Option<String>,
    state: Mutex<State>,
    model_id: String,
}

impl ScriptedMock {
    pub fn new(script: MockScript) -> Self {
        ScriptedMock {
            keyed: script.keyed.unwrap_or_default(),
            default: script.default,
            state: Mutex::new(State {
                queue: script.ordered.unwrap_or_default().into(),
                transcript: Vec::new(),
            }),
            model_id: MOCK_MODEL.into(),
        }
    }

    pub fn ordered<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(MockScript {
            ordered: Some(responses.into_iter().map(Into::into).collect()),
            ..MockScript::default()
        })
    }

    /// Keyed by the fingerprint of a single-user-message request with the
    /// given prompt text.
    pub fn keyed_prompts<P: AsRef<str>, R: Into<String>>(
        pairs: impl IntoIterator<Item = (P, R)>,
        default: Option<String>,
    ) -> Self {
        Self::new(MockScript {
            keyed: Some(
                pairs
                    .into_iter()
                    .map(|(p, r)| (prompt_fingerprint(p.as_ref()), r.into()))
                    .collect(),
            ),
            default,
            ..MockScript::default()
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("invalid mock script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.lock().transcript.clone()
    }

    pub fn calls(&self) -> usize {
        self.lock().transcript.len()
    }

    pub fn remaining(&self) -> usize {
        self.lock().queue.len()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl ChatProvider for ScriptedMock {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let key = fingerprint(&request.messages);
        let mut state = self.lock();
        let response = self
            .keyed
            .get(&key)
            .cloned()
            .or_else(|| state.queue.pop_front())
            .or_else(|| self.default.clone());
        state.transcript.push(TranscriptEntry {
            fingerprint: key,
            messages: request.messages.clone(),
            temperature: request.temperature,
            response: response.clone(),
        });
        response.ok_or(LlmError::MockExhausted)
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Provider backed by a closure; handy for tests that answer by content.
pub struct FnProvider<F> {
    f: F,
    model_id: String,
}

impl<F> FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(model_id: impl Into<String>, f: F) -> Self {
        FnProvider {
            f,
            model_id: model_id.into(),
        }
    }
}

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        (self.f)(request)
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}
