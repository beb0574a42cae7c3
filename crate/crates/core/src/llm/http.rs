use std::fmt;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, LlmError, ProviderConfig};

/// Client for any endpoint speaking the OpenAI chat-completions wire shape.
pub struct OpenAiProvider {
    agent: ureq::Agent,
    url: String,
    api_key: String,
    model_id: String,
    max_retries: u32,
    retry_base: Duration,
    gate: Gate,
}

impl fmt::Debug for OpenAiProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiProvider")
            .field("url", &self.url)
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Retryable(LlmError),
    Fatal(LlmError),
}

impl OpenAiProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, LlmError> {
        let endpoint = config
            .endpoint
            .as_deref()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| LlmError::Config("no endpoint configured".into()))?;
        let api_key = std::env::var(&config.credential_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::AuthMissing(config.credential_env.clone()))?;
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else {
            format!("{}/chat/completions", endpoint.trim_end_matches('/'))
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(OpenAiProvider {
            agent,
            url,
            api_key,
            model_id: config.model_id.clone(),
            max_retries: config.max_retries,
            retry_base: Duration::from_millis(config.retry_base_ms),
            gate: Gate::new(config.max_in_flight.max(1)),
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Failure> {
        let response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Err(Failure::Retryable(LlmError::Transport(e.to_string()))),
        };
        let status = response.status().as_u16();
        if status == 429 {
            return Err(Failure::Retryable(LlmError::RateLimited { attempts: 0 }));
        }
        if !(200..300).contains(&status) {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            let detail: String = detail.chars().take(200).collect();
            let err = LlmError::Transport(format!("HTTP {status}: {}", self.redact(&detail)));
            return Err(if status >= 500 {
                Failure::Retryable(err)
            } else {
                Failure::Fatal(err)
            });
        }
        let parsed: Completion = response
            .body_mut()
            .read_json()
            .map_err(|e| Failure::Fatal(LlmError::Transport(format!("unreadable completion: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| Failure::Fatal(LlmError::Transport("completion has no choices".into())))
    }

    fn redact(&self, text: &str) -> String {
        text.replace(&self.api_key, "[redacted]")
    }
}

impl ChatProvider for OpenAiProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let model = if request.model_id.is_empty() {
            &self.model_id
        } else {
            &request.model_id
        };
        let body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let _permit = self.gate.enter();
        let attempts = 1 + self.max_retries;
        let mut last = LlmError::Transport("no attempt made".into());
        for n in 0..attempts {
            if n > 0 {
                let delay = self.retry_base.saturating_mul(1 << (n - 1).min(16));
                log::warn!("retrying {} in {:?} after: {last}", self.url, delay);
                thread::sleep(delay);
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) => last = e,
            }
        }
        Err(match last {
            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
            other => other,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}
