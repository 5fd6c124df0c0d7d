//! In-process providers for tests, offline runs and the experiment harness.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use super::provider::{
    with_retries, AttemptError, ChatProvider, ChatResponse, ProviderError, RetryPolicy,
};
use super::ChatRequest;

/// Replies with a canned string, or echoes the latest user message.
pub struct EchoProvider {
    id: String,
    canned: Option<String>,
}

impl EchoProvider {
    pub fn new(id: impl Into<String>) -> Self {
        EchoProvider {
            id: id.into(),
            canned: None,
        }
    }

    pub fn canned(id: impl Into<String>, reply: impl Into<String>) -> Self {
        EchoProvider {
            id: id.into(),
            canned: Some(reply.into()),
        }
    }
}

impl ChatProvider for EchoProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let started = Instant::now();
        let text = match &self.canned {
            Some(c) => c.clone(),
            None => request.last_user_text().unwrap_or_default().to_string(),
        };
        if text.trim().is_empty() {
            return Err(ProviderError::Malformed {
                provider: self.id.clone(),
                message: "nothing to echo".into(),
            });
        }
        Ok(ChatResponse {
            text,
            latency: started.elapsed(),
            token_usage: None,
            retries: 0,
        })
    }
}

/// Plays back a fixed sequence of attempt outcomes through the real retry loop.
/// Once the script is exhausted every attempt succeeds with `fallback`.
pub struct ScriptedProvider {
    id: String,
    script: Mutex<VecDeque<Result<String, AttemptError>>>,
    fallback: String,
    policy: RetryPolicy,
    attempts: Mutex<u32>,
}

impl ScriptedProvider {
    pub fn new(
        id: impl Into<String>,
        script: Vec<Result<String, AttemptError>>,
        max_retries: u32,
    ) -> Self {
        ScriptedProvider {
            id: id.into(),
            script: Mutex::new(script.into()),
            fallback: "scripted reply".into(),
            policy: RetryPolicy {
                max_retries,
                backoff_base: Duration::from_millis(1),
            },
            attempts: Mutex::new(0),
        }
    }

    pub fn attempts(&self) -> u32 {
        *self.attempts.lock()
    }
}

impl ChatProvider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let started = Instant::now();
        let (text, retries) = with_retries(&self.id, &self.policy, |_| {
            *self.attempts.lock() += 1;
            self.script
                .lock()
                .pop_front()
                .unwrap_or_else(|| Ok(self.fallback.clone()))
        })?;
        Ok(ChatResponse {
            text,
            latency: started.elapsed(),
            token_usage: None,
            retries,
        })
    }
}
