//! Flat-file inputs: questions (JSON), relevance judgments and human scores (CSV).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoachError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Information,
    DecisionMaking,
    Translation,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Information,
        Category::DecisionMaking,
        Category::Translation,
    ];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Information => "Information",
            Category::DecisionMaking => "Decision-Making",
            Category::Translation => "Translation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub text: String,
    pub category: Category,
    pub reference_answer: String,
    #[serde(default)]
    pub has_known_answer_in_corpus: bool,
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
    let questions: Vec<Question> =
        serde_json::from_str(&raw).map_err(|e| CoachError::parse(path.display().to_string(), e))?;
    validate_questions(&questions)?;
    Ok(questions)
}

pub fn validate_questions(questions: &[Question]) -> Result<()> {
    let mut seen = HashSet::new();
    for q in questions {
        if !seen.insert(q.question_id.as_str()) {
            return Err(CoachError::DuplicateId(q.question_id.clone()));
        }
        if q.text.trim().is_empty() {
            return Err(CoachError::InvalidInput(format!(
                "question {} has no text",
                q.question_id
            )));
        }
        if q.reference_answer.trim().is_empty() {
            return Err(CoachError::InvalidInput(format!(
                "question {} has no reference answer",
                q.question_id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub question_id: String,
    pub chunk_id: String,
    #[serde(with = "zero_one")]
    pub relevant: bool,
    pub judge_id: String,
}

mod zero_one {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(de::Error::custom(format!("expected 0 or 1, got {other:?}"))),
        }
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> CoachError {
    if let csv::ErrorKind::Io(io) = e.kind() {
        if io.kind() == std::io::ErrorKind::NotFound {
            return CoachError::MissingFile(path.to_path_buf());
        }
    }
    CoachError::parse(path.display().to_string(), e)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CoachError::io(path, e))
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<RelevanceJudgment>> {
    let rows: Vec<RelevanceJudgment> = read_csv(path.as_ref())?;
    let mut seen = HashSet::new();
    for j in &rows {
        if !seen.insert((&j.question_id, &j.chunk_id, &j.judge_id)) {
            return Err(CoachError::DuplicateId(format!(
                "judgment {}/{}/{}",
                j.question_id, j.chunk_id, j.judge_id
            )));
        }
    }
    Ok(rows)
}

pub fn write_judgments(path: impl AsRef<Path>, rows: &[RelevanceJudgment]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

/// Relevant chunk ids per question. With several judges a chunk is relevant
/// when at least half of its judges marked it so.
pub fn relevant_sets(judgments: &[RelevanceJudgment]) -> HashMap<String, HashSet<String>> {
    let mut votes: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
    for j in judgments {
        let v = votes.entry((&j.question_id, &j.chunk_id)).or_default();
        v.1 += 1;
        if j.relevant {
            v.0 += 1;
        }
    }
    let mut out: HashMap<String, HashSet<String>> = HashMap::new();
    for ((q, c), (yes, total)) in votes {
        let set = out.entry(q.to_string()).or_default();
        if 2 * yes >= total {
            set.insert(c.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanScore {
    pub question_id: String,
    pub model_config_id: String,
    pub relevance: u8,
    pub accuracy: u8,
    pub completeness: u8,
    pub judge_id: String,
}

impl HumanScore {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("relevance", self.relevance),
            ("accuracy", self.accuracy),
            ("completeness", self.completeness),
        ] {
            if !(1..=3).contains(&v) {
                return Err(CoachError::InvalidInput(format!(
                    "{} for {}/{} is {v}, expected 1..3",
                    name, self.question_id, self.model_config_id
                )));
            }
        }
        Ok(())
    }
}

pub fn load_human_scores(path: impl AsRef<Path>) -> Result<Vec<HumanScore>> {
    let rows: Vec<HumanScore> = read_csv(path.as_ref())?;
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

pub fn write_human_scores(path: impl AsRef<Path>, rows: &[HumanScore]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}
