use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ChatTurn, Session, SummaryTurn};
use crate::error::{CoachError, Result};
use crate::generation::PersonaConfig;

/// One line of a session transcript. Replaying the lines in order rebuilds the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum SessionRecord {
    Created {
        session_id: String,
        persona: PersonaConfig,
        rag_enabled: bool,
        #[serde(default)]
        provider_id: Option<String>,
        created_at: DateTime<Utc>,
    },
    Turn(ChatTurn),
    Summary(SummaryTurn),
    Settings {
        persona: PersonaConfig,
        rag_enabled: bool,
        at: DateTime<Utc>,
    },
}

/// Append-only JSONL transcripts, one file per session.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl TranscriptStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| CoachError::io(&dir, e))?;
        Ok(TranscriptStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn create(&self, session: &Session) -> Result<()> {
        let record = SessionRecord::Created {
            session_id: session.session_id.clone(),
            persona: session.persona.clone(),
            rag_enabled: session.rag_enabled,
            provider_id: session.provider_id.clone(),
            created_at: session.created_at,
        };
        let path = self.path_for(&session.session_id);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| CoachError::io(&path, e))?;
        write_line(&mut f, &path, &record)
    }

    pub fn append(&self, session_id: &str, record: &SessionRecord) -> Result<()> {
        let path = self.path_for(session_id);
        let mut f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| CoachError::io(&path, e))?;
        write_line(&mut f, &path, record)
    }

    pub fn load(&self, session_id: &str) -> Result<Option<Session>> {
        if !valid_id(session_id) {
            return Ok(None);
        }
        let path = self.path_for(session_id);
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CoachError::io(&path, e)),
        };
        replay(BufReader::new(f), &path).map(Some)
    }

    pub fn load_all(&self) -> Result<Vec<Session>> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| CoachError::io(&self.dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CoachError::io(&self.dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            // a concurrent delete may remove the file between listing and reading
            if let Some(s) = self.load(id)? {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Removes a transcript. Missing transcripts are not an error.
    pub fn delete(&self, session_id: &str) -> Result<()> {
        if !valid_id(session_id) {
            return Ok(());
        }
        let path = self.path_for(session_id);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(CoachError::io(&path, e)),
        }
    }
}

fn write_line(f: &mut File, path: &Path, record: &SessionRecord) -> Result<()> {
    let mut line =
        serde_json::to_string(record).map_err(|e| CoachError::parse("session record", e))?;
    line.push('\n');
    f.write_all(line.as_bytes())
        .map_err(|e| CoachError::io(path, e))?;
    f.flush().map_err(|e| CoachError::io(path, e))
}

fn replay(reader: impl BufRead, path: &Path) -> Result<Session> {
    let mut session: Option<Session> = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoachError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord = serde_json::from_str(&line)
            .map_err(|e| CoachError::parse(format!("{} line {}", path.display(), n + 1), e))?;
        match (record, session.as_mut()) {
            (
                SessionRecord::Created {
                    session_id,
                    persona,
                    rag_enabled,
                    provider_id,
                    created_at,
                },
                None,
            ) => {
                session = Some(Session {
                    session_id,
                    persona,
                    rag_enabled,
                    provider_id,
                    history: Vec::new(),
                    summaries: Vec::new(),
                    created_at,
                    updated_at: created_at,
                });
            }
            (SessionRecord::Turn(t), Some(s)) => {
                s.updated_at = t.timestamp;
                s.history.push(t);
            }
            (SessionRecord::Summary(sum), Some(s)) => {
                s.updated_at = sum.timestamp;
                s.summaries.push(sum);
            }
            (
                SessionRecord::Settings {
                    persona,
                    rag_enabled,
                    at,
                },
                Some(s),
            ) => {
                s.persona = persona;
                s.rag_enabled = rag_enabled;
                s.updated_at = at;
            }
            _ => {
                return Err(CoachError::Parse {
                    what: path.display().to_string(),
                    message: format!("unexpected record order at line {}", n + 1),
                })
            }
        }
    }
    session.ok_or_else(|| CoachError::Parse {
        what: path.display().to_string(),
        message: "transcript is empty".into(),
    })
}
