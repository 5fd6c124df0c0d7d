use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::io::{HumanScore, Question};
use super::CategoryRow;
use crate::error::{CoachError, Result};
use crate::evaluation::Category;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanConfigReport {
    pub model_config_id: String,
    pub relevance: CategoryRow,
    pub accuracy: CategoryRow,
    pub completeness: CategoryRow,
    /// Per column, the mean of the three criterion rows.
    pub average: CategoryRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanReport {
    pub configs: Vec<HumanConfigReport>,
}

/// Config ids in order of first appearance.
pub fn config_ids(scores: &[HumanScore]) -> Vec<String> {
    let mut seen = HashSet::new();
    scores
        .iter()
        .filter(|s| seen.insert(s.model_config_id.as_str()))
        .map(|s| s.model_config_id.clone())
        .collect()
}

/// Averages scores across judges per question, then across questions per
/// category and overall. Every (question, config) pair needs at least one
/// score; missing pairs are listed in the error.
pub fn aggregate_human(
    scores: &[HumanScore],
    questions: &[Question],
    configs: &[String],
) -> Result<HumanReport> {
    let category: HashMap<&str, Category> = questions
        .iter()
        .map(|q| (q.question_id.as_str(), q.category))
        .collect();
    let mut seen = HashSet::new();
    let mut cells: BTreeMap<(&str, &str), Vec<&HumanScore>> = BTreeMap::new();
    for s in scores {
        s.validate()?;
        if !category.contains_key(s.question_id.as_str()) {
            return Err(CoachError::InvalidInput(format!(
                "score for unknown question {}",
                s.question_id
            )));
        }
        if !seen.insert((&s.question_id, &s.model_config_id, &s.judge_id)) {
            return Err(CoachError::DuplicateId(format!(
                "human score {}/{}/{}",
                s.question_id, s.model_config_id, s.judge_id
            )));
        }
        cells
            .entry((&s.model_config_id, &s.question_id))
            .or_default()
            .push(s);
    }

    let missing: Vec<String> = configs
        .iter()
        .flat_map(|c| {
            questions
                .iter()
                .filter(|q| !cells.contains_key(&(c.as_str(), q.question_id.as_str())))
                .map(move |q| format!("{}/{}", c, q.question_id))
        })
        .collect();
    if !missing.is_empty() {
        return Err(CoachError::InvalidInput(format!(
            "missing human scores for {} cell(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }

    let mut reports = Vec::with_capacity(configs.len());
    for c in configs {
        let mut rel = Vec::new();
        let mut acc = Vec::new();
        let mut comp = Vec::new();
        for q in questions {
            let judged = &cells[&(c.as_str(), q.question_id.as_str())];
            let n = judged.len() as f64;
            let avg =
                |f: fn(&HumanScore) -> u8| judged.iter().map(|s| f64::from(f(s))).sum::<f64>() / n;
            rel.push((q.category, avg(|s| s.relevance)));
            acc.push((q.category, avg(|s| s.accuracy)));
            comp.push((q.category, avg(|s| s.completeness)));
        }
        let relevance = CategoryRow::from_values(&rel);
        let accuracy = CategoryRow::from_values(&acc);
        let completeness = CategoryRow::from_values(&comp);
        let average = CategoryRow::mean_of(&[&relevance, &accuracy, &completeness]);
        reports.push(HumanConfigReport {
            model_config_id: c.clone(),
            relevance,
            accuracy,
            completeness,
            average,
        });
    }
    Ok(HumanReport { configs: reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str, category: Category) -> Question {
        Question {
            question_id: id.into(),
            text: "t".into(),
            category,
            reference_answer: "r".into(),
            has_known_answer_in_corpus: false,
        }
    }

    fn s(qid: &str, cfg: &str, r: u8, a: u8, c: u8, judge: &str) -> HumanScore {
        HumanScore {
            question_id: qid.into(),
            model_config_id: cfg.into(),
            relevance: r,
            accuracy: a,
            completeness: c,
            judge_id: judge.into(),
        }
    }

    #[test]
    fn all_threes() {
        let qs = vec![q("a", Category::Information), q("b", Category::Translation)];
        let scores = vec![s("a", "m", 3, 3, 3, "j"), s("b", "m", 3, 3, 3, "j")];
        let r = aggregate_human(&scores, &qs, &["m".into()]).unwrap();
        let m = &r.configs[0];
        assert_eq!(m.relevance.overall, Some(3.0));
        assert_eq!(m.average.get(Category::Translation), Some(3.0));
        assert_eq!(m.accuracy.get(Category::DecisionMaking), None);
    }

    #[test]
    fn judges_are_averaged() {
        let qs = vec![q("a", Category::Information)];
        let scores = vec![s("a", "m", 1, 1, 1, "j1"), s("a", "m", 3, 3, 2, "j2")];
        let r = aggregate_human(&scores, &qs, &["m".into()]).unwrap();
        assert_eq!(r.configs[0].relevance.overall, Some(2.0));
        assert_eq!(r.configs[0].completeness.overall, Some(1.5));
        assert!((r.configs[0].average.overall.unwrap() - (2.0 + 2.0 + 1.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_cells_are_reported() {
        let qs = vec![q("a", Category::Information), q("b", Category::Information)];
        let scores = vec![s("a", "m", 2, 2, 2, "j")];
        let err = aggregate_human(&scores, &qs, &["m".into(), "n".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("m/b") && msg.contains("n/a") && msg.contains("n/b"));
    }

    #[test]
    fn duplicate_and_unknown_are_rejected() {
        let qs = vec![q("a", Category::Information)];
        let dup = vec![s("a", "m", 2, 2, 2, "j"), s("a", "m", 3, 3, 3, "j")];
        assert!(aggregate_human(&dup, &qs, &["m".into()]).is_err());
        let unknown = vec![s("zz", "m", 2, 2, 2, "j")];
        assert!(aggregate_human(&unknown, &qs, &["m".into()]).is_err());
    }

    #[test]
    fn config_ids_keep_first_appearance_order() {
        let scores = vec![
            s("a", "y", 1, 1, 1, "j"),
            s("a", "x", 1, 1, 1, "j"),
            s("b", "y", 1, 1, 1, "j"),
        ];
        assert_eq!(config_ids(&scores), vec!["y".to_string(), "x".to_string()]);
    }
}
