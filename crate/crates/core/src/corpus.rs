//! Corpus manifest loading and heading-based Markdown chunking.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoachError, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topic {
    EssentialisingPractices,
    KernelAndLanguage,
    Games,
    Cards,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocType {
    Presentation,
    Guide,
    Book,
    ResearchArticle,
    WebArticle,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub doc_id: String,
    pub title: String,
    pub topic: Topic,
    pub doc_type: DocType,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub meta: DocumentMeta,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.meta.doc_id.as_str())
    }
}

/// A heading-delimited unit of corpus text; the retrievable atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Ancestor headings, outermost first; the last entry is the chunk's own heading.
    pub heading_path: Vec<String>,
    pub heading_level: u8,
    pub body: String,
    pub char_count: usize,
}

impl Chunk {
    /// Text fed to both indexes: the heading path followed by the body, so
    /// section context survives chunking.
    pub fn index_text(&self) -> String {
        if self.heading_path.is_empty() {
            self.body.clone()
        } else {
            format!("{}\n{}", self.heading_path.join(" > "), self.body)
        }
    }
}

/// Controls where documents are cut.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkPolicy {
    /// Heading levels that open a new chunk.
    pub split_levels: BTreeSet<u8>,
    /// Oversize chunks are split at paragraph boundaries.
    pub max_chars: usize,
    /// Undersize chunks are merged forward into their next sibling.
    pub min_chars: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            split_levels: [1, 2].into_iter().collect(),
            max_chars: 4000,
            min_chars: 200,
        }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.split_levels.is_empty() {
            return Err(CoachError::InvalidInput(
                "split_levels must not be empty".into(),
            ));
        }
        if let Some(bad) = self.split_levels.iter().find(|l| !(1..=6).contains(*l)) {
            return Err(CoachError::InvalidInput(format!(
                "heading level {bad} outside 1..=6"
            )));
        }
        if self.min_chars >= self.max_chars {
            return Err(CoachError::InvalidInput(format!(
                "min_chars ({}) must be below max_chars ({})",
                self.min_chars, self.max_chars
            )));
        }
        Ok(())
    }
}

/// Reads the JSON manifest and every document it references.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus> {
    let manifest_path = manifest_path.as_ref();
    if !manifest_path.is_file() {
        return Err(CoachError::MissingFile(manifest_path.to_path_buf()));
    }
    let raw = fs::read_to_string(manifest_path).map_err(|e| CoachError::io(manifest_path, e))?;
    let rows: Vec<DocumentMeta> = serde_json::from_str(&raw)
        .map_err(|e| CoachError::parse(manifest_path.display().to_string(), e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    let mut documents = Vec::with_capacity(rows.len());
    for mut meta in rows {
        if !seen.insert(meta.doc_id.clone()) {
            return Err(CoachError::DuplicateId(meta.doc_id));
        }
        if meta.path.is_relative() {
            meta.path = base.join(&meta.path);
        }
        if !meta.path.is_file() {
            return Err(CoachError::MissingFile(meta.path));
        }
        let bytes = fs::read(&meta.path).map_err(|e| CoachError::io(&meta.path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|e| CoachError::parse(meta.path.display().to_string(), e))?;
        documents.push(Document { meta, text });
    }
    Ok(Corpus { documents })
}

/// Intermediate section before ids are assigned.
#[derive(Debug, Clone)]
struct Piece {
    path: Vec<String>,
    level: u8,
    /// Original heading line; `None` for preambles and continuation parts.
    heading_line: Option<String>,
    body: String,
}

impl Piece {
    fn len(&self) -> usize {
        self.body.chars().count()
    }

    fn is_sibling_of(&self, other: &Piece) -> bool {
        self.level == other.level && parent(&self.path) == parent(&other.path)
    }

    fn merged_with(&self, next: &Piece) -> Piece {
        let mut body = self.body.clone();
        body.push_str("\n\n");
        if let Some(line) = &next.heading_line {
            body.push_str(line);
            body.push('\n');
        }
        body.push_str(&next.body);
        Piece {
            path: self.path.clone(),
            level: self.level,
            heading_line: self.heading_line.clone(),
            body,
        }
    }
}

fn parent(path: &[String]) -> &[String] {
    &path[..path.len().saturating_sub(1)]
}

/// Parses an ATX heading (`## Title ##`). Up to three leading spaces are allowed.
fn parse_atx_heading(line: &str) -> Option<(u8, String)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let hashes = rest.len() - rest.trim_start_matches('#').len();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let after = &rest[hashes..];
    if !after.is_empty() && !after.starts_with([' ', '\t']) {
        return None;
    }
    let mut text = after.trim();
    // optional closing sequence
    let stripped = text.trim_end_matches('#');
    if stripped.is_empty() || stripped.ends_with([' ', '\t']) {
        text = stripped.trim_end();
    }
    Some((hashes as u8, text.to_string()))
}

fn fence_marker(line: &str) -> Option<char> {
    let t = line.trim_start();
    if line.len() - t.len() > 3 {
        return None;
    }
    if t.starts_with("```") {
        Some('`')
    } else if t.starts_with("~~~") {
        Some('~')
    } else {
        None
    }
}

fn split_sections(doc: &Document, policy: &ChunkPolicy) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut stack: Vec<(u8, String)> = Vec::new();
    let mut current = Piece {
        path: vec![doc.meta.title.clone()],
        level: 1,
        heading_line: None,
        body: String::new(),
    };
    let mut lines: Vec<&str> = Vec::new();
    let mut fence: Option<char> = None;

    let flush = |piece: &mut Piece, lines: &mut Vec<&str>, pieces: &mut Vec<Piece>| {
        piece.body = lines.join("\n").trim().to_string();
        lines.clear();
        if !piece.body.is_empty() {
            pieces.push(piece.clone());
        }
    };

    for line in doc.text.lines() {
        if let Some(marker) = fence_marker(line) {
            fence = match fence {
                None => Some(marker),
                Some(open) if open == marker => None,
                other => other,
            };
            lines.push(line);
            continue;
        }
        if fence.is_none() {
            if let Some((level, text)) = parse_atx_heading(line) {
                while stack.last().is_some_and(|(l, _)| *l >= level) {
                    stack.pop();
                }
                stack.push((level, text));
                if policy.split_levels.contains(&level) {
                    flush(&mut current, &mut lines, &mut pieces);
                    current = Piece {
                        path: stack.iter().map(|(_, t)| t.clone()).collect(),
                        level,
                        heading_line: Some(line.trim().to_string()),
                        body: String::new(),
                    };
                    continue;
                }
            }
        }
        lines.push(line);
    }
    flush(&mut current, &mut lines, &mut pieces);
    pieces
}

/// Splits a body at blank lines into parts no longer than `max_chars`,
/// except for single paragraphs that are already longer.
fn split_oversize(piece: Piece, max_chars: usize) -> Vec<Piece> {
    if piece.len() <= max_chars {
        return vec![piece];
    }
    let mut paragraphs: Vec<String> = Vec::new();
    let mut buf: Vec<&str> = Vec::new();
    for line in piece.body.lines() {
        if line.trim().is_empty() {
            if !buf.is_empty() {
                paragraphs.push(buf.join("\n"));
                buf.clear();
            }
        } else {
            buf.push(line);
        }
    }
    if !buf.is_empty() {
        paragraphs.push(buf.join("\n"));
    }

    let mut parts: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut cur_len = 0usize;
    for para in paragraphs {
        let para_len = para.chars().count();
        if !cur.is_empty() && cur_len + 2 + para_len > max_chars {
            parts.push(std::mem::take(&mut cur));
            cur_len = 0;
        }
        if !cur.is_empty() {
            cur.push_str("\n\n");
            cur_len += 2;
        }
        cur.push_str(&para);
        cur_len += para_len;
    }
    if !cur.is_empty() {
        parts.push(cur);
    }

    parts
        .into_iter()
        .enumerate()
        .map(|(i, body)| Piece {
            path: piece.path.clone(),
            level: piece.level,
            heading_line: if i == 0 {
                piece.heading_line.clone()
            } else {
                None
            },
            body,
        })
        .collect()
}

fn merge_undersize(pieces: Vec<Piece>, policy: &ChunkPolicy) -> Vec<Piece> {
    let mut out = Vec::with_capacity(pieces.len());
    let mut iter = pieces.into_iter().peekable();
    while let Some(mut cur) = iter.next() {
        while cur.len() < policy.min_chars {
            let Some(next) = iter.peek() else { break };
            if !cur.is_sibling_of(next) {
                break;
            }
            let merged = cur.merged_with(next);
            if merged.len() > policy.max_chars {
                break;
            }
            iter.next();
            cur = merged;
        }
        out.push(cur);
    }
    out
}

/// Splits one document into chunks.
///
/// Chunks open at headings whose level is in `policy.split_levels`; the
/// opening heading is carried in `heading_path` rather than the body. Other
/// headings stay in the body verbatim. Oversize chunks are cut at paragraph
/// boundaries, then undersize chunks are merged forward into their next
/// sibling (the absorbed heading line is kept in the merged body).
/// A document without headings yields a single chunk titled by the document title.
pub fn chunk_document(doc: &Document, policy: &ChunkPolicy) -> Result<Vec<Chunk>> {
    policy.validate()?;
    let sections = split_sections(doc, policy);
    let split: Vec<Piece> = sections
        .into_iter()
        .flat_map(|p| split_oversize(p, policy.max_chars))
        .collect();
    let merged = merge_undersize(split, policy);

    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(i, piece)| Chunk {
            chunk_id: format!("{}:{:04}", doc.meta.doc_id, i),
            doc_id: doc.meta.doc_id.clone(),
            heading_path: piece.path,
            heading_level: piece.level,
            char_count: piece.body.chars().count(),
            body: piece.body,
        })
        .collect())
}

/// Chunks every document, preserving manifest order.
pub fn chunk_corpus(corpus: &Corpus, policy: &ChunkPolicy) -> Result<Vec<Chunk>> {
    chunk_corpus_with(corpus, policy, Execution::default())
}

pub fn chunk_corpus_with(
    corpus: &Corpus,
    policy: &ChunkPolicy,
    exec: Execution,
) -> Result<Vec<Chunk>> {
    policy.validate()?;
    let per_doc = par::try_map(exec, &corpus.documents, |doc| chunk_document(doc, policy))?;
    Ok(per_doc.into_iter().flatten().collect())
}

/// Writes chunks as JSON Lines.
pub fn write_chunks(path: impl AsRef<Path>, chunks: &[Chunk]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| CoachError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for chunk in chunks {
        let line = serde_json::to_string(chunk).map_err(|e| CoachError::parse("chunk", e))?;
        writeln!(w, "{line}").map_err(|e| CoachError::io(path, e))?;
    }
    w.flush().map_err(|e| CoachError::io(path, e))
}

/// Reads a JSON Lines chunk store, rejecting duplicate ids.
pub fn read_chunks(path: impl AsRef<Path>) -> Result<Vec<Chunk>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(CoachError::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| CoachError::io(path, e))?;
    let mut chunks = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoachError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk: Chunk = serde_json::from_str(&line)
            .map_err(|e| CoachError::parse(format!("{}:{}", path.display(), n + 1), e))?;
        if !seen.insert(chunk.chunk_id.clone()) {
            return Err(CoachError::DuplicateId(chunk.chunk_id));
        }
        chunks.push(chunk);
    }
    Ok(chunks)
}
