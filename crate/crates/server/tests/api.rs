use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use coach_core::chat::{ChatConfig, ChatEngine, TranscriptStore};
use coach_core::corpus::Chunk;
use coach_core::embedding::HashedEmbedder;
use coach_core::generation::mock::{EchoProvider, ScriptedProvider};
use coach_core::generation::{AttemptError, ChatProvider, PromptTemplate, ProviderRegistry};
use coach_core::lexical::Bm25Params;
use coach_core::{EnsembleConfig, Retriever};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

fn chunk(id: &str, body: &str) -> Chunk {
    Chunk {
        chunk_id: id.into(),
        doc_id: id.split(':').next().unwrap().into(),
        heading_path: vec!["Doc".into(), "Section".into()],
        heading_level: 2,
        body: body.into(),
        char_count: body.chars().count(),
    }
}

fn retriever() -> Arc<Retriever> {
    let chunks = vec![
        chunk(
            "kernel:0000",
            "the kernel has seven alphas for progress and health",
        ),
        chunk("kernel:0001", "activity spaces hold the things a team does"),
        chunk("games:0000", "progress poker estimates alpha states"),
        chunk(
            "games:0001",
            "chasing the state walks through the alpha checklists",
        ),
        chunk(
            "practices:0000",
            "pair programming uses a driver and a navigator",
        ),
    ];
    Arc::new(
        Retriever::build(
            chunks,
            Arc::new(HashedEmbedder::new(64)),
            EnsembleConfig::default(),
            Bm25Params::default(),
        )
        .unwrap(),
    )
}

fn engine(
    dir: &std::path::Path,
    provider: Arc<dyn ChatProvider>,
    indexed: bool,
) -> Arc<ChatEngine> {
    let e = ChatEngine::new(
        ProviderRegistry::new(provider),
        PromptTemplate::default(),
        TranscriptStore::open(dir).unwrap(),
        ChatConfig::default(),
    );
    if indexed {
        e.set_retriever(retriever());
    }
    Arc::new(e)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn echo_app(dir: &std::path::Path) -> Router {
    coach_server::router(engine(dir, Arc::new(EchoProvider::new("mock")), true))
}

#[tokio::test]
async fn health_reports_index() {
    let dir = tempfile::tempdir().unwrap();
    let (s, v) = call(&echo_app(dir.path()), Method::GET, "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["corpus_chunks"], 5);
    assert_eq!(v["index_ready"], true);
}

#[tokio::test]
async fn create_defaults_to_rag_on() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let (s, v) = call(&app, Method::POST, "/api/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["rag_enabled"], true);
    assert_eq!(v["persona"]["role"], Value::Null);
    assert_eq!(v["history"], json!([]));

    let (_, other) = call(&app, Method::POST, "/api/sessions", Some(json!({}))).await;
    assert_ne!(v["session_id"], other["session_id"]);
}

#[tokio::test]
async fn message_round_trip_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let (_, s) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"persona": {"role": "ScrumMaster", "event": "Retrospective"}})),
    )
    .await;
    let id = s["session_id"].as_str().unwrap().to_string();
    let (st, reply) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/messages"),
        Some(json!({"text": "how is progress poker played"})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let contexts = reply["contexts"].as_array().unwrap();
    assert!((1..=4).contains(&contexts.len()));
    for (i, c) in contexts.iter().enumerate() {
        assert_eq!(c["rank"], i + 1);
        assert!(c["doc_id"].is_string() && c["fused_score"].is_number());
    }
    assert!(reply["reply"]
        .as_str()
        .unwrap()
        .starts_with("how is progress poker played"));

    let (st, full) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(full["history"].as_array().unwrap().len(), 2);
    assert_eq!(full["history"][0]["speaker"], "user");
    assert_eq!(full["history"][1]["speaker"], "assistant");
}

#[tokio::test]
async fn rag_off_has_no_contexts() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let (_, s) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"rag_enabled": false})),
    )
    .await;
    let id = s["session_id"].as_str().unwrap();
    let (_, reply) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/messages"),
        Some(json!({"text": "hello"})),
    )
    .await;
    assert_eq!(reply["contexts"], json!([]));
    assert_eq!(reply["reply"], "hello");
}

#[tokio::test]
async fn patch_changes_future_turns() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let (_, s) = call(&app, Method::POST, "/api/sessions", None).await;
    let id = s["session_id"].as_str().unwrap();
    let uri = format!("/api/sessions/{id}");
    let (st, v) = call(
        &app,
        Method::PATCH,
        &uri,
        Some(json!({"rag_enabled": false, "persona": {"role": "Developer"}})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["rag_enabled"], false);
    assert_eq!(v["persona"]["role"], "Developer");
    let (_, reply) = call(
        &app,
        Method::POST,
        &format!("{uri}/messages"),
        Some(json!({"text": "alpha"})),
    )
    .await;
    assert_eq!(reply["contexts"], json!([]));

    let (st, err) = call(
        &app,
        Method::PATCH,
        &uri,
        Some(json!({"persona": {"role": "Wizard"}})),
    )
    .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error_code"], "invalid_body");
}

#[tokio::test]
async fn list_and_idempotent_delete() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let mut ids = Vec::new();
    for _ in 0..3 {
        let (_, s) = call(&app, Method::POST, "/api/sessions", None).await;
        ids.push(s["session_id"].as_str().unwrap().to_string());
    }
    let (_, list) = call(&app, Method::GET, "/api/sessions", None).await;
    let listed: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["session_id"].as_str().unwrap())
        .collect();
    assert_eq!(
        listed,
        vec![ids[2].as_str(), ids[1].as_str(), ids[0].as_str()]
    );

    let uri = format!("/api/sessions/{}", ids[0]);
    assert_eq!(
        call(&app, Method::DELETE, &uri, None).await.0,
        StatusCode::NO_CONTENT
    );
    assert_eq!(
        call(&app, Method::DELETE, &uri, None).await.0,
        StatusCode::NO_CONTENT
    );
    let (st, err) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["error_code"], "session_not_found");
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let (st, _) = call(
        &app,
        Method::POST,
        "/api/sessions/nope/messages",
        Some(json!({"text": "x"})),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let (_, s) = call(&app, Method::POST, "/api/sessions", None).await;
    let id = s["session_id"].as_str().unwrap();
    let uri = format!("/api/sessions/{id}/messages");
    for bad in [
        json!({"text": ""}),
        json!({"text": 3}),
        json!({"words": "x"}),
    ] {
        let (st, err) = call(&app, Method::POST, &uri, Some(bad)).await;
        assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
        assert!(err["message"].is_string());
    }
    let (st, _) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"provider_id": "ghost"})),
    )
    .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn index_not_ready_is_503() {
    let dir = tempfile::tempdir().unwrap();
    let app = coach_server::router(engine(dir.path(), Arc::new(EchoProvider::new("m")), false));
    let (_, h) = call(&app, Method::GET, "/api/health", None).await;
    assert_eq!(h["index_ready"], false);
    let (_, s) = call(&app, Method::POST, "/api/sessions", None).await;
    let id = s["session_id"].as_str().unwrap();
    let (st, err) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/messages"),
        Some(json!({"text": "x"})),
    )
    .await;
    assert_eq!(st, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(err["error_code"], "index_not_ready");
}

#[tokio::test]
async fn provider_failure_is_502_and_history_survives() {
    let dir = tempfile::tempdir().unwrap();
    let p = ScriptedProvider::new("s", vec![Err(AttemptError::Timeout)], 0);
    let app = coach_server::router(engine(dir.path(), Arc::new(p), true));
    let (_, s) = call(&app, Method::POST, "/api/sessions", None).await;
    let id = s["session_id"].as_str().unwrap();
    let uri = format!("/api/sessions/{id}/messages");
    let (st, err) = call(&app, Method::POST, &uri, Some(json!({"text": "alpha"}))).await;
    assert_eq!(st, StatusCode::BAD_GATEWAY);
    assert_eq!(err["error_code"], "provider_error");

    let (st, _) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"text": "alpha again"})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let (_, full) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    let h = full["history"].as_array().unwrap();
    assert_eq!(h.len(), 4);
    assert_eq!(h[0]["text"], "alpha");
    assert!(h[1]["error"].is_object());
}

#[tokio::test]
async fn summarize_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let app = echo_app(dir.path());
    let (_, s) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"rag_enabled": false})),
    )
    .await;
    let id = s["session_id"].as_str().unwrap();
    let (_, r) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/summarize"),
        None,
    )
    .await;
    assert_eq!(r["summary"], Value::Null);
    for i in 0..6 {
        call(
            &app,
            Method::POST,
            &format!("/api/sessions/{id}/messages"),
            Some(json!({"text": format!("q{i}")})),
        )
        .await;
    }
    let (st, r) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/summarize"),
        None,
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(r["summary"]["covers_through"], 8);
    assert_eq!(r["summary"]["speaker"], "system");
}

#[tokio::test]
async fn serves_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(dir.path(), Arc::new(EchoProvider::new("mock")), true);
    let (tx, rx) = tokio::sync::oneshot::channel();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(coach_server::serve(
        e,
        "127.0.0.1:0".parse().unwrap(),
        move |addr| {
            let _ = tx.send(addr);
        },
        async {
            let _ = stop_rx.await;
        },
    ));
    let addr = rx.await.unwrap();
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(b"GET /api/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"));
    assert!(buf.contains("\"index_ready\":true"));
    stop_tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
