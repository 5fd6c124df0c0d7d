use std::path::{Path, PathBuf};
use std::sync::Arc;

use coach_core::app;
use coach_core::config::AppConfig;
use coach_core::embedding::{EmbedderConfig, HashedEmbedder};
use coach_core::evaluation::{
    load_questions, mean, run_experiment, Category, ModelConfig, RelevanceJudgment,
};
use coach_core::Execution;

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn thirty_questions_two_configs_fill_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = AppConfig {
        data_dir: dir.path().to_path_buf(),
        manifest: Some(data().join("sample-corpus/manifest.json")),
        system_prompt: Some(data().join("system_prompt.md")),
        embedding: EmbedderConfig::hashed(384),
        ..AppConfig::default()
    };
    let retriever = Arc::new(app::rebuild(&cfg).unwrap());
    let engine = app::build_engine(&cfg, Some(retriever.clone())).unwrap();
    let questions = load_questions(data().join("questions.json")).unwrap();
    assert_eq!(questions.len(), 30);
    for c in Category::ALL {
        assert_eq!(questions.iter().filter(|q| q.category == c).count(), 10);
    }

    // every retrieved chunk judged relevant, so P@4 reflects only list length
    let judgments: Vec<RelevanceJudgment> = questions
        .iter()
        .flat_map(|q| {
            retriever
                .retrieve(&q.text)
                .unwrap()
                .into_iter()
                .map(|c| RelevanceJudgment {
                    question_id: q.question_id.clone(),
                    chunk_id: c.chunk_id,
                    judge_id: "j1".into(),
                    relevant: true,
                })
        })
        .collect();

    let configs = vec![
        ModelConfig::new("mock-rag", None, true),
        ModelConfig::new("mock-base", None, false),
    ];
    let out = run_experiment(
        &engine,
        &questions,
        &configs,
        &HashedEmbedder::new(384),
        Some(&judgments),
        4,
        Execution::default(),
    )
    .unwrap();

    assert_eq!(out.runs.len(), 2);
    for run in &out.runs {
        assert_eq!(run.answers.len(), 30);
        assert!(run
            .answers
            .iter()
            .all(|a| a.answer.is_some() && a.semantic.is_some()));
        let session = engine.get_session(&run.session_id).unwrap();
        assert_eq!(session.history.len(), 60);
        if run.config.rag_enabled {
            assert!(run
                .answers
                .iter()
                .all(|a| (2..=4).contains(&a.contexts.len())));
        } else {
            assert!(run.answers.iter().all(|a| a.contexts.is_empty()));
        }
    }

    for (rep, run) in out.report.semantic.iter().zip(&out.runs) {
        assert!(rep.failed.is_empty());
        for row in [&rep.precision, &rep.recall, &rep.f1] {
            assert!(
                row.information.is_some()
                    && row.decision_making.is_some()
                    && row.translation.is_some()
            );
        }
        let f1s: Vec<f64> = run.answers.iter().map(|a| a.semantic.unwrap().f1).collect();
        assert!((rep.f1.overall.unwrap() - mean(&f1s)).abs() < 1e-9);
    }

    let retrieval = out.report.retrieval.unwrap();
    assert_eq!(retrieval.queries.len(), 30);
    assert!((retrieval.mrr.overall.unwrap() - 1.0).abs() < 1e-12);
    assert!((retrieval.map.overall.unwrap() - 1.0).abs() < 1e-12);
    let p: Vec<f64> = retrieval.queries.iter().map(|q| q.precision_at_k).collect();
    assert!((retrieval.precision_at_k.overall.unwrap() - mean(&p)).abs() < 1e-9);
}
