//! Prompt assembly and chat-completion providers.

pub mod mock;
mod provider;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::RetrievedContext;
use crate::error::{CoachError, Result};

pub use provider::{
    load_provider_configs, with_retries, AttemptError, ChatProvider, ChatResponse,
    HttpChatProvider, ProviderConfig, ProviderError, ProviderMetrics, ProviderRegistry,
    RetryPolicy, TokenUsage, WireFormat,
};

/// Canonical system prompt shipped with the repository.
pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../../../../data/system_prompt.md");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    ScrumMaster,
    ProductOwner,
    Developer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::ScrumMaster => "Scrum Master",
            Role::ProductOwner => "Product Owner",
            Role::Developer => "Developer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    SprintPlanning,
    Retrospective,
    DailyStandup,
    SprintReview,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Event::SprintPlanning => "Sprint Planning",
            Event::Retrospective => "Sprint Retrospective",
            Event::DailyStandup => "Daily Stand-up",
            Event::SprintReview => "Sprint Review",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLimit {
    pub min: u32,
    pub max: u32,
}

impl WordLimit {
    /// The limit used for the evaluation runs.
    pub const EXPERIMENT: WordLimit = WordLimit { min: 100, max: 250 };
}

/// Who the user is and what they are preparing for. `None` fields add nothing to the prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonaConfig {
    pub role: Option<Role>,
    pub event: Option<Event>,
    pub word_limit: Option<WordLimit>,
}

impl PersonaConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(WordLimit { min, max }) = self.word_limit {
            if min == 0 || min > max {
                return Err(CoachError::InvalidInput(format!(
                    "invalid word limit {min}..{max}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_word_limit(mut self, limit: WordLimit) -> Self {
        self.word_limit = Some(limit);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: Speaker,
    pub text: String,
}

impl ChatMessage {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        ChatMessage {
            speaker,
            text: text.into(),
        }
    }
}

/// Provider-independent chat request. `model_name` and `provider_id` are
/// filled in by the provider that sends it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub model_name: String,
    pub provider_id: String,
}

impl ChatRequest {
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.speaker == Speaker::User)
            .map(|m| m.text.as_str())
    }
}

/// Base system prompt text; persona and word-limit sentences are appended per request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    base: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            base: DEFAULT_SYSTEM_PROMPT.trim().to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(base: impl Into<String>) -> Self {
        PromptTemplate {
            base: base.into().trim().to_string(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
        if text.trim().is_empty() {
            return Err(CoachError::Config(format!(
                "system prompt {} is empty",
                path.display()
            )));
        }
        Ok(Self::new(text))
    }

    pub fn system_prompt(&self, persona: &PersonaConfig) -> String {
        let mut prompt = self.base.clone();
        let mut extra = Vec::new();
        if let Some(role) = persona.role {
            extra.push(format!(
                "The user works as the {role} of their team; tailor advice to that role's responsibilities."
            ));
        }
        if let Some(event) = persona.event {
            extra.push(format!(
                "The user is preparing for or taking part in the {event}; relate your answer to that event."
            ));
        }
        if let Some(WordLimit { min, max }) = persona.word_limit {
            extra.push(format!(
                "Answer in no fewer than {min} and no more than {max} words."
            ));
        }
        if !extra.is_empty() {
            prompt.push_str("\n\n");
            prompt.push_str(&extra.join(" "));
        }
        prompt
    }

    /// Builds the request for one user turn.
    ///
    /// With RAG enabled each context is appended after the query under a
    /// delimiter line `--- context <rank>: <doc_id> / <a > b> ---`, in rank
    /// order and verbatim. `history` is the prompt-visible prior conversation.
    pub fn assemble(
        &self,
        query: &str,
        contexts: &[RetrievedContext],
        persona: &PersonaConfig,
        rag_enabled: bool,
        history: &[ChatMessage],
    ) -> Result<ChatRequest> {
        if query.trim().is_empty() {
            return Err(CoachError::InvalidInput("query is empty".into()));
        }
        if !rag_enabled && !contexts.is_empty() {
            return Err(CoachError::InvalidInput(
                "contexts supplied with RAG disabled".into(),
            ));
        }
        persona.validate()?;

        let mut user = query.to_string();
        let mut ordered: Vec<&RetrievedContext> = contexts.iter().collect();
        ordered.sort_by_key(|c| c.rank);
        for c in ordered {
            user.push_str("\n\n");
            user.push_str(&context_delimiter(c));
            user.push('\n');
            user.push_str(&c.body);
        }

        let mut messages = history.to_vec();
        messages.push(ChatMessage::new(Speaker::User, user));
        Ok(ChatRequest {
            system_prompt: self.system_prompt(persona),
            messages,
            model_name: String::new(),
            provider_id: String::new(),
        })
    }
}

pub fn context_delimiter(c: &RetrievedContext) -> String {
    format!(
        "--- context {}: {} / {} ---",
        c.rank,
        c.doc_id,
        c.heading_path.join(" > ")
    )
}

/// Assembles a single-turn request with the canonical template.
pub fn assemble_prompt(
    query: &str,
    contexts: &[RetrievedContext],
    persona: &PersonaConfig,
    rag_enabled: bool,
) -> Result<ChatRequest> {
    PromptTemplate::default().assemble(query, contexts, persona, rag_enabled, &[])
}
