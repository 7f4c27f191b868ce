use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mgtd_core::corpus::Label;
use mgtd_core::service::{PlaygroundItem, PlaygroundPool, SessionStore};
use mgtd_core::{ClassifierModel, EncoderConfig, Vocabulary};
use mgtd_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn words(n: usize) -> String {
    (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
}

fn tiny_model() -> ClassifierModel {
    let vocab = Vocabulary::build(["w1 w2 w3 some text"], 100);
    let cfg = EncoderConfig { embedding_dim: 8, num_layers: 1, num_heads: 2, feedforward_dim: 16, max_seq_len: 64, dropout: 0.0 };
    ClassifierModel::new(vocab, cfg, vec!["arxiv".into()], 3).unwrap()
}

fn state(per_label: usize) -> AppState {
    let items = (0..per_label)
        .flat_map(|i| {
            Label::ALL.into_iter().map(move |label| PlaygroundItem {
                id: format!("{}-{i}", label.code()),
                text: format!("sample text number {i}"),
                label,
                domain: "arxiv".into(),
            })
        })
        .collect();
    AppState::new(SessionStore::new(Arc::new(PlaygroundPool::new(items)), 11, Duration::from_secs(600)))
}

fn loaded(per_label: usize) -> (AppState, Router) {
    let s = state(per_label);
    assert!(s.install_model(tiny_model()));
    let app = router(s.clone(), None);
    (s, app)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/api/playground/session", Some(json!({}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["session"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn detect_enforces_the_word_gate() {
    let (_, app) = loaded(1);
    for (n, status, code) in [
        (49, StatusCode::UNPROCESSABLE_ENTITY, Some("too_short")),
        (50, StatusCode::OK, None),
        (500, StatusCode::OK, None),
        (501, StatusCode::UNPROCESSABLE_ENTITY, Some("too_long")),
    ] {
        let (got, body) = call(&app, "POST", "/api/detect", Some(json!({ "text": words(n) }))).await;
        assert_eq!(got, status, "{n} words: {body}");
        match code {
            Some(c) => {
                assert_eq!(body["code"], c);
                assert_eq!(body["word_count"], n);
            }
            None => {
                let probs = body["probabilities"].as_object().unwrap();
                assert_eq!(probs.len(), 4);
                let sum: f64 = probs.values().map(|v| v.as_f64().unwrap()).sum();
                assert!((sum - 1.0).abs() < 1e-6);
                assert_eq!(body["word_count"], n);
            }
        }
    }
    let (got, body) = call(&app, "POST", "/api/detect", Some(json!({ "text": "   " }))).await;
    assert_eq!(got, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "empty");
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let (_, app) = loaded(1);
    let (got, body) = call(&app, "POST", "/api/detect", Some(json!({ "txt": "x" }))).await;
    assert_eq!(got, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");
    let (got, body) = call(&app, "GET", "/api/playground/sample", None).await;
    assert_eq!(got, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");
}

#[tokio::test]
async fn health_and_detect_before_the_model_loads() {
    let s = state(2);
    let app = router(s.clone(), None);
    let (status, body) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["loaded"], false);
    assert_eq!(body["pool_size"], 8);
    let (status, body) = call(&app, "POST", "/api/detect", Some(json!({ "text": words(60) }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "not_loaded");

    assert!(s.install_model(tiny_model()));
    assert!(!s.install_model(tiny_model()));
    let (_, body) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(body["loaded"], true);
}

#[tokio::test]
async fn playground_round_trip() {
    let (s, app) = loaded(3);
    let id = new_session(&app).await;
    let mut seen = HashSet::new();
    let mut correct = 0;
    for k in 0..12 {
        let (status, sample) = call(&app, "GET", &format!("/api/playground/sample?session={id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let obj = sample.as_object().unwrap();
        assert!(!obj.contains_key("label"));
        let raw = sample.to_string();
        assert!(Label::ALL.iter().all(|l| !raw.contains(l.name())), "{raw}");
        let item = sample["item"].as_str().unwrap().to_string();
        assert!(seen.insert(item.clone()));

        let truth = s.sessions().pool().items().iter().find(|i| i.id == item).unwrap().label;
        let guess = if k % 3 == 0 { Label::from_code((truth.code() + 1) % 4).unwrap() } else { truth };
        correct += usize::from(guess == truth);
        let req = json!({ "session": id, "item": item, "label": guess.name() });
        let (status, verdict) = call(&app, "POST", "/api/playground/guess", Some(req.clone())).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(verdict["truth"], truth.name());
        assert_eq!(verdict["verdict"], if guess == truth { "correct" } else { "incorrect" });
        let (status, body) = call(&app, "POST", "/api/playground/guess", Some(req)).await;
        assert_eq!(status, StatusCode::CONFLICT);
        assert_eq!(body["code"], "already_scored");
    }
    let (status, body) = call(&app, "GET", &format!("/api/playground/sample?session={id}"), None).await;
    assert_eq!(status, StatusCode::GONE);
    assert_eq!(body["code"], "exhausted");
    let (_, score) = call(&app, "GET", &format!("/api/playground/score?session={id}"), None).await;
    assert_eq!(score["score"], json!({ "correct": correct, "total": 12 }));
}

#[tokio::test]
async fn unknown_sessions_and_items_are_not_found() {
    let (_, app) = loaded(2);
    let (status, body) = call(&app, "GET", "/api/playground/sample?session=nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_session");
    let id = new_session(&app).await;
    let req = json!({ "session": id, "item": "0-0", "label": "human_written" });
    let (status, body) = call(&app, "POST", "/api/playground/guess", Some(req)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_item");
}

#[tokio::test]
async fn session_ids_are_distinct() {
    let (_, app) = loaded(1);
    let mut ids = HashSet::new();
    for _ in 0..20 {
        assert!(ids.insert(new_session(&app).await));
    }
    let (status, body) = call(&app, "POST", "/api/playground/session", None).await;
    assert_eq!(status, StatusCode::OK, "a bodiless create is allowed: {body}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_guesses_keep_the_score_consistent() {
    let (_, app) = loaded(25);
    let id = new_session(&app).await;
    let mut items = Vec::new();
    for _ in 0..50 {
        let (_, s) = call(&app, "GET", &format!("/api/playground/sample?session={id}"), None).await;
        items.push(s["item"].as_str().unwrap().to_string());
    }
    let tasks: Vec<_> = (0..100)
        .map(|t| {
            let app = app.clone();
            let req = json!({ "session": id, "item": items[t % 50], "label": Label::from_code(t % 4).unwrap().name() });
            tokio::spawn(async move { call(&app, "POST", "/api/playground/guess", Some(req)).await })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        let (status, body) = t.await.unwrap();
        match status {
            StatusCode::OK => {
                ok += 1;
                assert!(body["score"]["correct"].as_u64() <= body["score"]["total"].as_u64());
            }
            StatusCode::CONFLICT => {}
            other => panic!("unexpected {other}: {body}"),
        }
    }
    assert_eq!(ok, 50);
    let (_, score) = call(&app, "GET", &format!("/api/playground/score?session={id}"), None).await;
    assert_eq!(score["score"]["total"], 50);
    assert!(score["score"]["correct"].as_u64().unwrap() <= 50);
}

#[tokio::test]
async fn static_directory_is_served_as_fallback() {
    let dir = std::env::temp_dir().join(format!("mgtd-static-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<p>ui</p>").unwrap();
    let s = state(1);
    let app = router(s, Some(dir.clone()));
    let resp = app.oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<p>ui</p>");
    std::fs::remove_dir_all(dir).unwrap();
}
