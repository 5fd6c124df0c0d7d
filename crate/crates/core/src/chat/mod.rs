//! Chat sessions: append-only transcripts, the per-message RAG pipeline and
//! history summarization.

mod store;

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::RetrievedContext;
use crate::error::CoachError;
use crate::generation::{
    ChatMessage, ChatProvider, ChatRequest, PersonaConfig, PromptTemplate, ProviderError,
    ProviderRegistry, Speaker,
};
use crate::retriever::Retriever;

pub use store::{SessionRecord, TranscriptStore};

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown provider {0}")]
    UnknownProvider(String),
    #[error("retrieval index is not ready")]
    IndexNotReady,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("storage error: {0}")]
    Storage(#[from] CoachError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub text: String,
    /// Contexts shown to the model; assistant turns only, empty when RAG was off.
    #[serde(default)]
    pub contexts_used: Vec<RetrievedContext>,
    #[serde(default)]
    pub latency_ms: Option<u64>,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub provider_id: Option<String>,
    /// Set when the vector half failed and retrieval fell back to BM25 only.
    #[serde(default)]
    pub retrieval_fallback: Option<String>,
    /// Set on assistant turns whose provider call failed.
    #[serde(default)]
    pub error: Option<TurnError>,
}

impl ChatTurn {
    fn user(text: &str) -> Self {
        ChatTurn {
            speaker: Speaker::User,
            text: text.to_string(),
            contexts_used: Vec::new(),
            latency_ms: None,
            timestamp: Utc::now(),
            provider_id: None,
            retrieval_fallback: None,
            error: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// A system-speaker summary standing in for `history[..covers_through]` in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTurn {
    pub speaker: Speaker,
    pub text: String,
    pub covers_through: usize,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub persona: PersonaConfig,
    pub rag_enabled: bool,
    #[serde(default)]
    pub provider_id: Option<String>,
    pub history: Vec<ChatTurn>,
    #[serde(default)]
    pub summaries: Vec<SummaryTurn>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Session {
    /// Index of the first history turn not covered by a summary.
    pub fn window_start(&self) -> usize {
        self.summaries.last().map_or(0, |s| s.covers_through)
    }

    /// Messages the model sees before the next user turn: the latest summary
    /// (if any) followed by the uncovered turns. Failed exchanges are skipped.
    pub fn prompt_window(&self) -> Vec<ChatMessage> {
        let mut out = Vec::new();
        if let Some(s) = self.summaries.last() {
            out.push(ChatMessage::new(
                Speaker::System,
                format!("Summary of the earlier conversation: {}", s.text),
            ));
        }
        let turns = &self.history[self.window_start()..];
        let mut i = 0;
        while i < turns.len() {
            let t = &turns[i];
            let next_failed = turns.get(i + 1).is_some_and(ChatTurn::is_error);
            if t.speaker == Speaker::User && next_failed {
                i += 2;
                continue;
            }
            if !t.is_error() {
                out.push(ChatMessage::new(t.speaker, t.text.clone()));
            }
            i += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub persona: PersonaConfig,
    pub rag_enabled: bool,
    pub turns: usize,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        SessionSummary {
            session_id: s.session_id.clone(),
            persona: s.persona.clone(),
            rag_enabled: s.rag_enabled,
            turns: s.history.len(),
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    /// Minimum number of uncovered turns before summarization does anything.
    pub summarize_threshold: usize,
    /// Most recent turns kept verbatim after summarization.
    pub summary_keep: usize,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            summarize_threshold: 10,
            summary_keep: 4,
        }
    }
}

const SUMMARY_PROMPT: &str = "You summarise conversations between a user and Essence Coach. \
Write a short, neutral summary that keeps the questions asked, the key points of each answer, \
and every Essence element (alphas, states, work products, activities, practices) that came up.";

/// Request handling core shared by the HTTP service, the CLI and the experiment runner.
pub struct ChatEngine {
    retriever: RwLock<Option<Arc<Retriever>>>,
    providers: ProviderRegistry,
    template: PromptTemplate,
    store: TranscriptStore,
    config: ChatConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl ChatEngine {
    pub fn new(
        providers: ProviderRegistry,
        template: PromptTemplate,
        store: TranscriptStore,
        config: ChatConfig,
    ) -> Self {
        ChatEngine {
            retriever: RwLock::new(None),
            providers,
            template,
            store,
            config,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_retriever(self, retriever: Arc<Retriever>) -> Self {
        self.set_retriever(retriever);
        self
    }

    /// Installs (or atomically replaces) the retrieval indexes.
    pub fn set_retriever(&self, retriever: Arc<Retriever>) {
        *self.retriever.write() = Some(retriever);
    }

    pub fn retriever(&self) -> Option<Arc<Retriever>> {
        self.retriever.read().clone()
    }

    pub fn index_ready(&self) -> bool {
        self.retriever.read().is_some()
    }

    pub fn corpus_chunks(&self) -> usize {
        self.retriever
            .read()
            .as_ref()
            .map_or(0, |r| r.chunks().len())
    }

    pub fn providers(&self) -> &ProviderRegistry {
        &self.providers
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    fn provider_for(&self, session: &Session) -> Result<Arc<dyn ChatProvider>, ChatError> {
        self.providers
            .get(session.provider_id.as_deref())
            .cloned()
            .ok_or_else(|| {
                ChatError::UnknownProvider(session.provider_id.clone().unwrap_or_default())
            })
    }

    pub fn create_session(
        &self,
        persona: PersonaConfig,
        rag_enabled: bool,
        provider_id: Option<String>,
    ) -> Result<Session, ChatError> {
        persona
            .validate()
            .map_err(|e| ChatError::InvalidInput(e.to_string()))?;
        if let Some(id) = &provider_id {
            if self.providers.get(Some(id)).is_none() {
                return Err(ChatError::UnknownProvider(id.clone()));
            }
        }
        let now = Utc::now();
        let session = Session {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            persona,
            rag_enabled,
            provider_id,
            history: Vec::new(),
            summaries: Vec::new(),
            created_at: now,
            updated_at: now,
        };
        self.store.create(&session)?;
        self.sessions.lock().insert(
            session.session_id.clone(),
            Arc::new(Mutex::new(session.clone())),
        );
        Ok(session)
    }

    fn handle(&self, session_id: &str) -> Result<Arc<Mutex<Session>>, ChatError> {
        let mut sessions = self.sessions.lock();
        if let Some(h) = sessions.get(session_id) {
            return Ok(h.clone());
        }
        let session = self
            .store
            .load(session_id)?
            .ok_or_else(|| ChatError::NotFound(session_id.to_string()))?;
        let h = Arc::new(Mutex::new(session));
        sessions.insert(session_id.to_string(), h.clone());
        Ok(h)
    }

    pub fn get_session(&self, session_id: &str) -> Result<Session, ChatError> {
        Ok(self.handle(session_id)?.lock().clone())
    }

    /// Newest first.
    pub fn list_sessions(&self) -> Result<Vec<SessionSummary>, ChatError> {
        let mut all: Vec<SessionSummary> = self
            .store
            .load_all()?
            .iter()
            .map(|s| {
                // prefer in-memory state, which may be ahead of a concurrent reader's view
                match self.sessions.lock().get(&s.session_id) {
                    Some(h) => SessionSummary::from(&*h.lock()),
                    None => SessionSummary::from(s),
                }
            })
            .collect();
        all.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| b.session_id.cmp(&a.session_id))
        });
        Ok(all)
    }

    /// Idempotent.
    pub fn delete_session(&self, session_id: &str) -> Result<(), ChatError> {
        let handle = self.sessions.lock().remove(session_id);
        // wait for any in-flight message on this session
        let _guard = handle.as_ref().map(|h| h.lock());
        self.store.delete(session_id)?;
        Ok(())
    }

    /// Changes persona and/or RAG for subsequent turns.
    pub fn update_session(
        &self,
        session_id: &str,
        persona: Option<PersonaConfig>,
        rag_enabled: Option<bool>,
    ) -> Result<Session, ChatError> {
        let handle = self.handle(session_id)?;
        let mut session = handle.lock();
        if let Some(p) = &persona {
            p.validate()
                .map_err(|e| ChatError::InvalidInput(e.to_string()))?;
        }
        let persona = persona.unwrap_or_else(|| session.persona.clone());
        let rag_enabled = rag_enabled.unwrap_or(session.rag_enabled);
        let now = Utc::now();
        self.store.append(
            session_id,
            &SessionRecord::Settings {
                persona: persona.clone(),
                rag_enabled,
                at: now,
            },
        )?;
        session.persona = persona;
        session.rag_enabled = rag_enabled;
        session.updated_at = now;
        Ok(session.clone())
    }

    /// Runs one exchange: retrieve (when RAG is on), assemble the prompt with
    /// the visible history, call the provider, append both turns.
    ///
    /// The user turn is persisted before the provider call. A provider failure
    /// is recorded as an assistant turn carrying `error` and returned as
    /// [`ChatError::Provider`].
    pub fn post_message(&self, session_id: &str, text: &str) -> Result<ChatTurn, ChatError> {
        if text.trim().is_empty() {
            return Err(ChatError::InvalidInput("message text is empty".into()));
        }
        let handle = self.handle(session_id)?;
        let mut session = handle.lock();
        let provider = self.provider_for(&session)?;

        let (contexts, fallback) = if session.rag_enabled {
            let retriever = self.retriever().ok_or(ChatError::IndexNotReady)?;
            let outcome = retriever.retrieve_with_fallback(text);
            (outcome.contexts, outcome.fallback_reason)
        } else {
            (Vec::new(), None)
        };

        let request: ChatRequest = self
            .template
            .assemble(
                text,
                &contexts,
                &session.persona,
                session.rag_enabled,
                &session.prompt_window(),
            )
            .map_err(|e| ChatError::InvalidInput(e.to_string()))?;

        let user_turn = ChatTurn::user(text);
        self.store
            .append(session_id, &SessionRecord::Turn(user_turn.clone()))?;
        session.history.push(user_turn);
        session.updated_at = Utc::now();

        let result = provider.complete(&request);
        let (turn, outcome) = match result {
            Ok(resp) => (
                ChatTurn {
                    speaker: Speaker::Assistant,
                    text: resp.text,
                    contexts_used: contexts,
                    latency_ms: Some(resp.latency.as_millis() as u64),
                    timestamp: Utc::now(),
                    provider_id: Some(provider.id().to_string()),
                    retrieval_fallback: fallback,
                    error: None,
                },
                None,
            ),
            Err(e) => (
                ChatTurn {
                    speaker: Speaker::Assistant,
                    text: String::new(),
                    contexts_used: contexts,
                    latency_ms: None,
                    timestamp: Utc::now(),
                    provider_id: Some(provider.id().to_string()),
                    retrieval_fallback: fallback,
                    error: Some(TurnError {
                        code: "provider_error".into(),
                        message: e.to_string(),
                    }),
                },
                Some(e),
            ),
        };
        self.store
            .append(session_id, &SessionRecord::Turn(turn.clone()))?;
        session.history.push(turn.clone());
        session.updated_at = turn.timestamp;
        match outcome {
            None => Ok(turn),
            Some(e) => Err(ChatError::Provider(e)),
        }
    }

    /// Compacts the prompt-visible window: everything but the last
    /// `summary_keep` uncovered turns is replaced by a provider-written summary.
    /// Returns `None` when fewer than `summarize_threshold` turns are uncovered.
    /// The transcript keeps every original turn.
    pub fn summarize(&self, session_id: &str) -> Result<Option<SummaryTurn>, ChatError> {
        let handle = self.handle(session_id)?;
        let mut session = handle.lock();
        let start = session.window_start();
        let uncovered = session.history.len() - start;
        if uncovered < self.config.summarize_threshold || uncovered <= self.config.summary_keep {
            return Ok(None);
        }
        let covers_through = session.history.len() - self.config.summary_keep;

        let mut transcript = String::new();
        if let Some(prev) = session.summaries.last() {
            transcript.push_str(&format!("Earlier summary: {}\n\n", prev.text));
        }
        for t in &session.history[start..covers_through] {
            if t.is_error() {
                continue;
            }
            let who = match t.speaker {
                Speaker::User => "User",
                Speaker::Assistant => "Coach",
                Speaker::System => "System",
            };
            transcript.push_str(&format!("{who}: {}\n", t.text));
        }
        let request = ChatRequest {
            system_prompt: SUMMARY_PROMPT.to_string(),
            messages: vec![ChatMessage::new(
                Speaker::User,
                format!("Summarise this conversation:\n\n{transcript}"),
            )],
            model_name: String::new(),
            provider_id: String::new(),
        };
        let provider = self.provider_for(&session)?;
        let resp = provider.complete(&request)?;

        let summary = SummaryTurn {
            speaker: Speaker::System,
            text: resp.text,
            covers_through,
            timestamp: Utc::now(),
        };
        self.store
            .append(session_id, &SessionRecord::Summary(summary.clone()))?;
        session.summaries.push(summary.clone());
        session.updated_at = summary.timestamp;
        Ok(Some(summary))
    }
}
