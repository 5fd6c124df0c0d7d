//! Retrieval metrics, semantic response scoring, human-score aggregation and
//! the experiment runner.

pub mod experiment;
pub mod human;
pub mod io;
pub mod metrics;
pub mod report;
pub mod semantic;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par::{self, Execution};
use crate::retriever::Retriever;

pub use experiment::{
    collect_runs, run_experiment, score_runs, AnswerRecord, ConfigRun, ContextRef,
    ExperimentOutput, ExperimentReport, ModelConfig, SemanticConfigReport,
};
pub use human::{aggregate_human, HumanConfigReport, HumanReport};
pub use io::{
    load_human_scores, load_judgments, load_questions, relevant_sets, Category, HumanScore,
    Question, RelevanceJudgment,
};
pub use metrics::{average_precision, map, mean, mrr, precision_at_k, reciprocal_rank};
pub use semantic::{semantic_score, SemanticScore};

/// One value per question category plus the overall value.
///
/// `overall` is the mean of all per-question values, not the mean of the
/// category means. `None` marks a column with no values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub information: Option<f64>,
    pub decision_making: Option<f64>,
    pub translation: Option<f64>,
    pub overall: Option<f64>,
}

impl CategoryRow {
    pub fn from_values(values: &[(Category, f64)]) -> Self {
        let of = |c: Category| {
            let v: Vec<f64> = values
                .iter()
                .filter(|(k, _)| *k == c)
                .map(|(_, v)| *v)
                .collect();
            (!v.is_empty()).then(|| mean(&v))
        };
        let all: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        CategoryRow {
            information: of(Category::Information),
            decision_making: of(Category::DecisionMaking),
            translation: of(Category::Translation),
            overall: (!all.is_empty()).then(|| mean(&all)),
        }
    }

    /// Column-wise mean of several rows; a column is `None` if any row lacks it.
    pub fn mean_of(rows: &[&CategoryRow]) -> Self {
        let col = |f: fn(&CategoryRow) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
            v.filter(|v| !v.is_empty()).map(|v| mean(&v))
        };
        CategoryRow {
            information: col(|r| r.information),
            decision_making: col(|r| r.decision_making),
            translation: col(|r| r.translation),
            overall: col(|r| r.overall),
        }
    }

    pub fn get(&self, c: Category) -> Option<f64> {
        match c {
            Category::Information => self.information,
            Category::DecisionMaking => self.decision_making,
            Category::Translation => self.translation,
        }
    }

    /// Columns in display order: the three categories, then overall.
    pub fn columns(&self) -> [Option<f64>; 4] {
        [
            self.information,
            self.decision_making,
            self.translation,
            self.overall,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub question_id: String,
    pub category: Category,
    pub ranked: Vec<String>,
    pub precision_at_k: f64,
    pub reciprocal_rank: f64,
    pub average_precision: f64,
    /// Retrieved chunks with no judgment row; they count as not relevant.
    pub unjudged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub k: usize,
    pub precision_at_k: CategoryRow,
    pub mrr: CategoryRow,
    pub map: CategoryRow,
    pub queries: Vec<QueryResult>,
}

/// Scores ranked chunk lists against judgments. Questions without a ranked
/// list are skipped; questions without judgments score 0.
pub fn evaluate_retrieval(
    questions: &[Question],
    ranked: &HashMap<String, Vec<String>>,
    judgments: &[RelevanceJudgment],
    k: usize,
) -> Result<RetrievalReport> {
    let relevant = relevant_sets(judgments);
    let mut judged: HashMap<&str, HashSet<&str>> = HashMap::new();
    for j in judgments {
        judged
            .entry(&j.question_id)
            .or_default()
            .insert(&j.chunk_id);
    }
    let empty = HashSet::new();
    let mut queries = Vec::new();
    for q in questions {
        let Some(list) = ranked.get(&q.question_id) else {
            continue;
        };
        let rel = relevant.get(&q.question_id).unwrap_or(&empty);
        let seen = judged.get(q.question_id.as_str());
        queries.push(QueryResult {
            question_id: q.question_id.clone(),
            category: q.category,
            ranked: list.clone(),
            precision_at_k: precision_at_k(list, rel, k)?,
            reciprocal_rank: reciprocal_rank(list, rel),
            average_precision: average_precision(list, rel),
            unjudged: list
                .iter()
                .filter(|c| !seen.is_some_and(|s| s.contains(c.as_str())))
                .cloned()
                .collect(),
        });
    }
    let row = |f: fn(&QueryResult) -> f64| {
        CategoryRow::from_values(
            &queries
                .iter()
                .map(|r| (r.category, f(r)))
                .collect::<Vec<_>>(),
        )
    };
    Ok(RetrievalReport {
        k,
        precision_at_k: row(|r| r.precision_at_k),
        mrr: row(|r| r.reciprocal_rank),
        map: row(|r| r.average_precision),
        queries,
    })
}

/// Runs retrieval for every question and returns the ranked chunk ids.
pub fn rank_questions(
    retriever: &Retriever,
    questions: &[Question],
    exec: Execution,
) -> Result<HashMap<String, Vec<String>>> {
    let lists = par::try_map(exec, questions, |q| {
        retriever.retrieve(&q.text).map(|ctx| {
            (
                q.question_id.clone(),
                ctx.into_iter().map(|c| c.chunk_id).collect::<Vec<_>>(),
            )
        })
    })?;
    Ok(lists
        .into_iter()
        .collect::<BTreeMap<_, _>>()
        .into_iter()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str, c: Category) -> Question {
        Question {
            question_id: id.into(),
            text: "t".into(),
            category: c,
            reference_answer: "r".into(),
            has_known_answer_in_corpus: true,
        }
    }

    fn j(q: &str, c: &str, rel: bool) -> RelevanceJudgment {
        RelevanceJudgment {
            question_id: q.into(),
            chunk_id: c.into(),
            relevant: rel,
            judge_id: "e".into(),
        }
    }

    #[test]
    fn overall_is_mean_of_questions_not_of_categories() {
        let row = CategoryRow::from_values(&[
            (Category::Information, 1.0),
            (Category::Information, 1.0),
            (Category::Information, 1.0),
            (Category::Translation, 0.0),
        ]);
        assert_eq!(row.information, Some(1.0));
        assert_eq!(row.translation, Some(0.0));
        assert_eq!(row.decision_making, None);
        assert_eq!(row.overall, Some(0.75));
    }

    #[test]
    fn retrieval_report_matches_metric_functions() {
        let qs = vec![
            q("a", Category::Information),
            q("b", Category::Translation),
            q("c", Category::Translation),
        ];
        let ranked = HashMap::from([
            (
                "a".to_string(),
                vec!["x".to_string(), "y".into(), "z".into(), "w".into()],
            ),
            ("b".to_string(), vec!["m".to_string(), "n".into()]),
        ]);
        let judgments = vec![
            j("a", "x", true),
            j("a", "y", false),
            j("a", "z", true),
            j("b", "n", true),
        ];
        let r = evaluate_retrieval(&qs, &ranked, &judgments, 4).unwrap();
        assert_eq!(r.queries.len(), 2);
        assert_eq!(r.precision_at_k.information, Some(0.5));
        assert_eq!(r.precision_at_k.translation, Some(0.25));
        assert_eq!(r.mrr.overall, Some((1.0 + 0.5) / 2.0));
        let ap_a = (1.0 + 2.0 / 3.0) / 2.0;
        assert!((r.map.overall.unwrap() - (ap_a + 0.5) / 2.0).abs() < 1e-12);
        assert_eq!(r.queries[0].unjudged, vec!["w".to_string()]);
        assert_eq!(r.queries[1].unjudged, vec!["m".to_string()]);
    }

    #[test]
    fn mean_of_rows_propagates_missing_columns() {
        let a = CategoryRow::from_values(&[(Category::Information, 1.0)]);
        let b = CategoryRow::from_values(&[(Category::Information, 3.0)]);
        let m = CategoryRow::mean_of(&[&a, &b]);
        assert_eq!(m.information, Some(2.0));
        assert_eq!(m.translation, None);
    }
}
