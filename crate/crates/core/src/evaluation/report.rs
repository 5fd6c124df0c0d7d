//! Aligned plain-text tables for retrieval, semantic and human-score reports.

use std::fmt::Write;

use super::experiment::{ExperimentReport, SemanticConfigReport};
use super::human::HumanReport;
use super::{CategoryRow, RetrievalReport};

const HEADERS: [&str; 4] = ["Information", "Decision-Making", "Translation", "Overall"];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

/// Renders rows of `(label columns, values)` with every column padded to its widest cell.
fn table(label_headers: &[&str], rows: &[(Vec<String>, &CategoryRow)]) -> String {
    let mut grid: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    grid.push(
        label_headers
            .iter()
            .chain(HEADERS.iter())
            .map(|s| s.to_string())
            .collect(),
    );
    for (labels, row) in rows {
        let mut line = labels.clone();
        line.extend(row.columns().into_iter().map(cell));
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|i| grid.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, r) in grid.iter().enumerate() {
        let mut line = String::new();
        for (i, c) in r.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i < label_headers.len() {
                let _ = write!(line, "{c:<w$}", w = widths[i]);
            } else {
                let _ = write!(line, "{c:>w$}", w = widths[i]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if n == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn render_retrieval(r: &RetrievalReport) -> String {
    let mut out = format!(
        "Retrieval metrics ({} questions, K={})\n",
        r.queries.len(),
        r.k
    );
    let p = format!("Precision@{}", r.k);
    out.push_str(&table(
        &["Metric"],
        &[
            (vec![p], &r.precision_at_k),
            (vec!["MRR".into()], &r.mrr),
            (vec!["MAP".into()], &r.map),
        ],
    ));
    let unjudged: usize = r.queries.iter().map(|q| q.unjudged.len()).sum();
    if unjudged > 0 {
        let _ = writeln!(
            out,
            "note: {unjudged} retrieved chunk(s) had no judgment and counted as not relevant"
        );
    }
    out
}

pub fn render_semantic(reports: &[SemanticConfigReport]) -> String {
    let mut out = String::from("Semantic similarity to reference answers\n");
    let mut rows = Vec::new();
    for s in reports {
        rows.push((
            vec![s.model_config_id.clone(), "Precision".into()],
            &s.precision,
        ));
        rows.push((vec![s.model_config_id.clone(), "Recall".into()], &s.recall));
        rows.push((vec![s.model_config_id.clone(), "F1".into()], &s.f1));
    }
    out.push_str(&table(&["Config", "Metric"], &rows));
    for s in reports.iter().filter(|s| !s.failed.is_empty()) {
        let _ = writeln!(
            out,
            "note: {} has no score for {}",
            s.model_config_id,
            s.failed.join(", ")
        );
    }
    out
}

pub fn render_human(r: &HumanReport) -> String {
    let mut out = String::from("Human scores (1 = low, 3 = high)\n");
    let mut rows = Vec::new();
    for c in &r.configs {
        rows.push((
            vec![c.model_config_id.clone(), "Relevance".into()],
            &c.relevance,
        ));
        rows.push((
            vec![c.model_config_id.clone(), "Accuracy".into()],
            &c.accuracy,
        ));
        rows.push((
            vec![c.model_config_id.clone(), "Completeness".into()],
            &c.completeness,
        ));
        rows.push((
            vec![c.model_config_id.clone(), "Average".into()],
            &c.average,
        ));
    }
    out.push_str(&table(&["Config", "Criterion"], &rows));
    out
}

pub fn render_experiment(r: &ExperimentReport) -> String {
    let mut parts = Vec::new();
    if let Some(ret) = &r.retrieval {
        parts.push(render_retrieval(ret));
    }
    if !r.semantic.is_empty() {
        parts.push(render_semantic(&r.semantic));
    }
    if let Some(h) = &r.human {
        parts.push(render_human(h));
    }
    parts.join("\n")
}
