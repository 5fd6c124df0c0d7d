//! Ranked-retrieval metrics over chunk ids.

use std::collections::HashSet;

use crate::error::{CoachError, Result};

/// `|relevant ∩ top-k| / k`. A list shorter than `k` is padded with
/// non-relevant entries, so the denominator is always `k`.
pub fn precision_at_k<S: AsRef<str>>(
    ranked: &[S],
    relevant: &HashSet<String>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(CoachError::InvalidInput("k must be at least 1".into()));
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| relevant.contains(id.as_ref()))
        .count();
    Ok(hits as f64 / k as f64)
}

/// `1 / rank` of the first relevant entry, 0 when none is relevant.
pub fn reciprocal_rank<S: AsRef<str>>(ranked: &[S], relevant: &HashSet<String>) -> f64 {
    ranked
        .iter()
        .position(|id| relevant.contains(id.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Mean of Precision@j over the ranks j holding a relevant entry.
/// The divisor is the number of relevant entries in the list; 0 when there are none.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], relevant: &HashSet<String>) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn mrr(reciprocal_ranks: &[f64]) -> f64 {
    mean(reciprocal_ranks)
}

pub fn map(average_precisions: &[f64]) -> f64 {
    mean(average_precisions)
}
