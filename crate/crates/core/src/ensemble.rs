//! Ensemble retrieval: take the top `k_each` hits from the vector and the
//! lexical search, fuse their min-max normalized scores with fixed weights,
//! and deduplicate into at most `2 * k_each` contexts.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CoachError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub k_each: usize,
    pub weight_vector: f64,
    pub weight_lexical: f64,
    /// Candidates per method over which min-max normalization is computed.
    pub normalization_pool: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            k_each: 2,
            weight_vector: 0.5,
            weight_lexical: 0.5,
            normalization_pool: 10,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_each == 0 {
            return Err(CoachError::Config("k_each must be at least 1".into()));
        }
        if self.weight_vector < 0.0 || self.weight_lexical < 0.0 {
            return Err(CoachError::Config(
                "ensemble weights must be non-negative".into(),
            ));
        }
        if ((self.weight_vector + self.weight_lexical) - 1.0).abs() > 1e-9 {
            return Err(CoachError::Config("ensemble weights must sum to 1".into()));
        }
        Ok(())
    }

    /// Number of candidates fetched from each method.
    pub fn pool_size(&self) -> usize {
        self.normalization_pool.max(self.k_each)
    }

    /// Maximum number of contexts a retrieval can return.
    pub fn max_contexts(&self) -> usize {
        2 * self.k_each
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Vector,
    Lexical,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Vector => "vector",
            Source::Lexical => "lexical",
        }
    }
}

/// Fusion result for one chunk, before chunk text is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHit {
    pub chunk_id: String,
    /// Raw cosine, when the chunk is in the vector pool.
    pub vector_score: Option<f64>,
    /// Raw BM25, when the chunk is in the lexical pool.
    pub lexical_score: Option<f64>,
    pub vector_norm: f64,
    pub lexical_norm: f64,
    pub fused_score: f64,
    pub rank: usize,
    /// Methods whose top-`k_each` list contained the chunk.
    pub sources: BTreeSet<Source>,
}

/// A retrieved chunk with its scores and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub chunk_id: String,
    pub doc_id: String,
    pub heading_path: Vec<String>,
    pub body: String,
    pub vector_score: Option<f64>,
    pub lexical_score: Option<f64>,
    pub vector_norm: f64,
    pub lexical_norm: f64,
    pub fused_score: f64,
    pub rank: usize,
    pub sources: BTreeSet<Source>,
}

impl RetrievedContext {
    pub fn from_hit(
        hit: FusedHit,
        doc_id: String,
        heading_path: Vec<String>,
        body: String,
    ) -> Self {
        RetrievedContext {
            chunk_id: hit.chunk_id,
            doc_id,
            heading_path,
            body,
            vector_score: hit.vector_score,
            lexical_score: hit.lexical_score,
            vector_norm: hit.vector_norm,
            lexical_norm: hit.lexical_norm,
            fused_score: hit.fused_score,
            rank: hit.rank,
            sources: hit.sources,
        }
    }
}

/// Min-max normalizes a ranked pool. A pool whose scores are all equal
/// (including a single entry) normalizes to 1.0.
fn min_max(pool: &[(String, f64)]) -> HashMap<&str, (f64, f64)> {
    let max = pool.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = pool.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let span = max - min;
    pool.iter()
        .map(|(id, s)| {
            let norm = if span > 0.0 { (s - min) / span } else { 1.0 };
            (id.as_str(), (*s, norm))
        })
        .collect()
}

/// Fuses two ranked pools (each sorted by descending score).
///
/// Candidates are the union of the first `k_each` entries of each pool. Each
/// method contributes its normalized score, or 0 when the candidate is absent
/// from that method's pool.
pub fn fuse(
    vector_pool: &[(String, f64)],
    lexical_pool: &[(String, f64)],
    config: &EnsembleConfig,
) -> Vec<FusedHit> {
    let k = config.k_each;
    let vec_norm = min_max(vector_pool);
    let lex_norm = min_max(lexical_pool);

    let mut sources: HashMap<&str, BTreeSet<Source>> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (pool, source) in [
        (vector_pool, Source::Vector),
        (lexical_pool, Source::Lexical),
    ] {
        for (id, _) in pool.iter().take(k) {
            let entry = sources.entry(id.as_str()).or_insert_with(|| {
                order.push(id.as_str());
                BTreeSet::new()
            });
            entry.insert(source);
        }
    }

    let mut hits: Vec<FusedHit> = order
        .into_iter()
        .map(|id| {
            let v = vec_norm.get(id).copied();
            let l = lex_norm.get(id).copied();
            let vector_norm = v.map_or(0.0, |x| x.1);
            let lexical_norm = l.map_or(0.0, |x| x.1);
            FusedHit {
                chunk_id: id.to_string(),
                vector_score: v.map(|x| x.0),
                lexical_score: l.map(|x| x.0),
                vector_norm,
                lexical_norm,
                fused_score: config.weight_vector * vector_norm
                    + config.weight_lexical * lexical_norm,
                rank: 0,
                sources: sources.remove(id).unwrap_or_default(),
            }
        })
        .collect();
    hits.sort_by(|a, b| {
        b.fused_score
            .total_cmp(&a.fused_score)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    for (i, h) in hits.iter_mut().enumerate() {
        h.rank = i + 1;
    }
    hits
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// One line per context with raw, normalized and fused scores.
/// Floats use shortest round-trip formatting so [`parse_explain`] recovers them exactly.
pub fn explain(result: &[RetrievedContext]) -> String {
    let mut out = String::new();
    for c in result {
        let sources: Vec<&str> = c.sources.iter().map(|s| s.as_str()).collect();
        let _ = writeln!(
            out,
            "rank={} chunk={} fused={} vector={} vector_norm={} lexical={} lexical_norm={} sources={} path={}",
            c.rank,
            c.chunk_id,
            c.fused_score,
            fmt_opt(c.vector_score),
            c.vector_norm,
            fmt_opt(c.lexical_score),
            c.lexical_norm,
            sources.join("+"),
            c.heading_path.join(" > "),
        );
    }
    out
}

/// Structured form of one [`explain`] line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainLine {
    pub rank: usize,
    pub chunk_id: String,
    pub fused_score: f64,
    pub vector_score: Option<f64>,
    pub vector_norm: f64,
    pub lexical_score: Option<f64>,
    pub lexical_norm: f64,
    pub sources: BTreeSet<Source>,
}

impl ExplainLine {
    pub fn matches(&self, c: &RetrievedContext) -> bool {
        self.rank == c.rank
            && self.chunk_id == c.chunk_id
            && self.fused_score == c.fused_score
            && self.vector_score == c.vector_score
            && self.vector_norm == c.vector_norm
            && self.lexical_score == c.lexical_score
            && self.lexical_norm == c.lexical_norm
            && self.sources == c.sources
    }
}

pub fn parse_explain(trace: &str) -> Result<Vec<ExplainLine>> {
    let bad = |msg: String| CoachError::parse("explain trace", msg);
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
    let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };

    let mut lines = Vec::new();
    for line in trace.lines().filter(|l| !l.trim().is_empty()) {
        let head = line.split(" path=").next().unwrap_or(line);
        let fields: HashMap<&str, &str> = head
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(format!("missing {k} in {line:?}")))
        };
        let mut sources = BTreeSet::new();
        for s in get("sources")?.split('+').filter(|s| !s.is_empty()) {
            sources.insert(match s {
                "vector" => Source::Vector,
                "lexical" => Source::Lexical,
                other => return Err(bad(format!("unknown source {other}"))),
            });
        }
        lines.push(ExplainLine {
            rank: get("rank")?
                .parse()
                .map_err(|e| bad(format!("rank: {e}")))?,
            chunk_id: get("chunk")?.to_string(),
            fused_score: num(get("fused")?)?,
            vector_score: opt(get("vector")?)?,
            vector_norm: num(get("vector_norm")?)?,
            lexical_score: opt(get("lexical")?)?,
            lexical_norm: num(get("lexical_norm")?)?,
            sources,
        });
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(items: &[(&str, f64)]) -> Vec<(String, f64)> {
        items.iter().map(|(id, s)| (id.to_string(), *s)).collect()
    }

    fn ids(hits: &[FusedHit]) -> Vec<&str> {
        hits.iter().map(|h| h.chunk_id.as_str()).collect()
    }

    #[test]
    fn disjoint_top_lists_give_four_contexts() {
        let v = pool(&[("a", 0.9), ("b", 0.8), ("c", 0.1)]);
        let l = pool(&[("x", 7.0), ("y", 5.0), ("a", 1.0)]);
        let hits = fuse(&v, &l, &EnsembleConfig::default());
        assert_eq!(hits.len(), 4);
    }

    #[test]
    fn identical_top_lists_give_two_contexts() {
        let v = pool(&[("a", 0.9), ("b", 0.8), ("c", 0.1)]);
        let l = pool(&[("b", 7.0), ("a", 5.0), ("c", 1.0)]);
        let hits = fuse(&v, &l, &EnsembleConfig::default());
        assert_eq!(hits.len(), 2);
        assert!(hits.iter().all(|h| h.sources.len() == 2));
    }

    // Hand computation:
    //   vector pool  a=1.0 b=0.75 c=0.5 -> norms a=1, b=0.5, c=0
    //   lexical pool a=8   d=6   e=4   -> norms a=1, d=0.5, e=0
    //   candidates: a (both), b (vector), d (lexical)
    //   fused: a = 0.5*1 + 0.5*1 = 1.0; b = 0.5*0.5 + 0 = 0.25; d = 0 + 0.5*0.5 = 0.25
    //   b and d tie, broken by chunk id
    #[test]
    fn shared_rank_one_gets_fused_one() {
        let v = pool(&[("a", 1.0), ("b", 0.75), ("c", 0.5)]);
        let l = pool(&[("a", 8.0), ("d", 6.0), ("e", 4.0)]);
        let hits = fuse(&v, &l, &EnsembleConfig::default());
        assert_eq!(ids(&hits), vec!["a", "b", "d"]);
        assert_eq!(hits[0].fused_score, 1.0);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(
            hits[0].sources,
            [Source::Vector, Source::Lexical].into_iter().collect()
        );
        assert!((hits[1].fused_score - 0.25).abs() < 1e-15);
        assert!((hits[2].fused_score - 0.25).abs() < 1e-15);
        assert_eq!(hits[1].lexical_score, None);
        assert_eq!(hits[2].vector_score, None);
    }

    #[test]
    fn pool_membership_beyond_top_k_still_contributes() {
        // c is vector-only top-2 but sits third in the lexical pool
        let v = pool(&[("a", 0.9), ("c", 0.5)]);
        let l = pool(&[("x", 9.0), ("y", 6.0), ("c", 3.0)]);
        let hits = fuse(&v, &l, &EnsembleConfig::default());
        let c = hits.iter().find(|h| h.chunk_id == "c").unwrap();
        assert_eq!(c.sources, [Source::Vector].into_iter().collect());
        assert_eq!(c.lexical_score, Some(3.0));
        assert_eq!(c.lexical_norm, 0.0);
    }

    #[test]
    fn single_entry_pool_normalizes_to_one() {
        let v = pool(&[("a", 0.2)]);
        let hits = fuse(&v, &[], &EnsembleConfig::default());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].vector_norm, 1.0);
        assert_eq!(hits[0].fused_score, 0.5);
    }

    #[test]
    fn zero_lexical_weight_follows_vector_order() {
        let cfg = EnsembleConfig {
            weight_vector: 1.0,
            weight_lexical: 0.0,
            ..Default::default()
        };
        let v = pool(&[("c", 0.9), ("a", 0.7), ("b", 0.2)]);
        let l = pool(&[("a", 9.0), ("z", 8.0)]);
        let hits = fuse(&v, &l, &cfg);
        let vector_members: Vec<&str> = hits
            .iter()
            .filter(|h| h.sources.contains(&Source::Vector))
            .map(|h| h.chunk_id.as_str())
            .collect();
        assert_eq!(vector_members, vec!["c", "a"]);
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig::default().validate().is_ok());
        let bad_sum = EnsembleConfig {
            weight_vector: 0.7,
            ..Default::default()
        };
        assert!(bad_sum.validate().is_err());
        let bad_k = EnsembleConfig {
            k_each: 0,
            ..Default::default()
        };
        assert!(bad_k.validate().is_err());
    }

    fn ctx(hit: FusedHit) -> RetrievedContext {
        RetrievedContext::from_hit(
            hit,
            "doc".into(),
            vec!["A".into(), "B c".into()],
            "body".into(),
        )
    }

    #[test]
    fn explain_empty_and_round_trip() {
        assert_eq!(explain(&[]), "");
        let v = pool(&[("d:0001", 0.812_345_678_9), ("d:0002", 0.1)]);
        let l = pool(&[("d:0003", 12.5), ("d:0004", 1.0 / 3.0)]);
        let result: Vec<RetrievedContext> = fuse(&v, &l, &EnsembleConfig::default())
            .into_iter()
            .map(ctx)
            .collect();
        let trace = explain(&result);
        assert_eq!(trace.lines().count(), 4);
        let parsed = parse_explain(&trace).unwrap();
        assert_eq!(
            parsed.iter().map(|p| p.rank).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
        for (p, c) in parsed.iter().zip(&result) {
            assert!(p.matches(c), "{p:?} vs {c:?}");
        }
    }
}
