use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, LlmError, Role};

/// OpenAI-compatible chat-completions client.
pub struct LiveBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: String,
    attempts: usize,
    base_delay: Duration,
    slots: Mutex<usize>,
    freed: Condvar,
}

impl LiveBackend {
    /// `api_key_var` names the environment variable holding the bearer token.
    pub fn new(model: &str, url: &str, api_key_var: &str, timeout: Duration, max_concurrent: usize) -> Result<Self, LlmError> {
        let api_key =
            std::env::var(api_key_var).map_err(|_| LlmError::Auth(format!("environment variable {api_key_var} is not set")))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LiveBackend {
            agent,
            url: url.to_string(),
            model: model.to_string(),
            api_key,
            attempts: 3,
            base_delay: Duration::from_millis(500),
            slots: Mutex::new(max_concurrent.max(1)),
            freed: Condvar::new(),
        })
    }

    pub fn with_retry(mut self, attempts: usize, base_delay: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.base_delay = base_delay;
        self
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::with_capacity(request.turns.len() + 1);
        if !request.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_text}));
        }
        messages.extend(request.turns.iter().map(|t| {
            let role = match t.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            json!({"role": role, "content": t.text})
        }));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_reply_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Failure> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(Failure::Auth(format!("HTTP {status}")));
        }
        if status == 429 || status >= 500 {
            return Err(Failure::Retry(format!("HTTP {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Failure::Retry(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Failure::Retry("response has no message content".into()))
    }

    fn acquire(&self) {
        let mut free = self.slots.lock().expect("slot lock");
        while *free == 0 {
            free = self.freed.wait(free).expect("slot lock");
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.slots.lock().expect("slot lock") += 1;
        self.freed.notify_one();
    }
}

enum Failure {
    Retry(String),
    Auth(String),
    Fatal(String),
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = self.body(request);
        self.acquire();
        let mut last = String::new();
        let mut outcome = None;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                thread::sleep(self.base_delay * 2u32.pow(attempt as u32 - 1));
            }
            match self.attempt(&body) {
                Ok(text) => {
                    outcome = Some(Ok(text));
                    break;
                }
                Err(Failure::Auth(m)) => {
                    outcome = Some(Err(LlmError::Auth(m)));
                    break;
                }
                Err(Failure::Fatal(m)) => {
                    outcome = Some(Err(LlmError::Config(m)));
                    break;
                }
                Err(Failure::Retry(m)) => {
                    tracing::warn!(attempt = attempt + 1, error = %m, "chat request failed");
                    last = m;
                }
            }
        }
        self.release();
        outcome.unwrap_or(Err(LlmError::Transport {
            attempts: self.attempts,
            message: last,
        }))
    }
}
