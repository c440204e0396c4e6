use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use metasynth::corpus::{read_corpus, write_jsonl_atomic};
use metasynth::fixtures::{fixture_config, write_fixture_tree};
use metasynth::model::{FinalStatus, GoldenTriplet};
use metasynth::pipeline::{Pipeline, StopPoints};
use metasynth_review::{router, ApiState};

/// 1,000 AutoAccepted and 50 HITLPending records cloned from a real run.
fn corpus(dir: &Path) -> (Vec<GoldenTriplet>, Vec<GoldenTriplet>) {
    let src = dir.join("src");
    let out = dir.join("run");
    write_fixture_tree(&src, 3).unwrap();
    Pipeline::from_config(fixture_config(&src, &out))
        .unwrap()
        .run(&StopPoints::default())
        .unwrap();
    let template = read_corpus(&out.join("validated_triplets.jsonl")).unwrap().remove(0);
    let make = |i: usize, status: FinalStatus| {
        let mut t = template.clone();
        t.triplet_id = format!("{}-R{i:04}", t.anchor_id);
        t.final_status = status;
        t
    };
    let validated: Vec<_> = (0..1000).map(|i| make(i, FinalStatus::AutoAccepted)).collect();
    let hitl: Vec<_> = (1000..1050).map(|i| make(i, FinalStatus::HitlPending)).collect();
    (validated, hitl)
}

fn setup(dir: &Path, token: Option<&str>) -> axum::Router {
    let (validated, hitl) = corpus(dir);
    let out = dir.join("review");
    std::fs::create_dir_all(&out).unwrap();
    write_jsonl_atomic(&out.join("validated_triplets.jsonl"), &validated).unwrap();
    write_jsonl_atomic(&out.join("hitl_triplets.jsonl"), &hitl).unwrap();
    let state = ApiState::open(&out, 0.05, 11, token.map(String::from), 0.005).unwrap();
    router(Arc::new(state))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn verdict(id: &str, decision: &str, revised: Option<&str>) -> Value {
    let mut v = json!({
        "triplet_id": id,
        "decision": decision,
        "rubric": {"physiological_accuracy": 5, "coaching_relevance": 4, "source_fidelity": 5},
        "reviewer_id": "reviewer-1",
        "timestamp": "2026-01-01T00:00:00Z",
    });
    if let Some(r) = revised {
        v["revised_output"] = json!(r);
    }
    v
}

#[tokio::test]
async fn queue_pages_cover_pending_and_sample() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path(), None);
    let (s, first) = call(&app, "GET", "/review/queue?page=1&per_page=20", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["schema_version"], "1");
    assert_eq!(first["total"], 100);
    assert_eq!(first["pages"], 5);
    let mut seen = Vec::new();
    for page in 1..=5 {
        let (_, v) = call(&app, "GET", &format!("/review/queue?page={page}"), None).await;
        for it in v["items"].as_array().unwrap() {
            seen.push(it["triplet"]["triplet_id"].as_str().unwrap().to_string());
        }
    }
    assert_eq!(seen.len(), 100);
    let number = |id: &str| id.rsplit("-R").next().unwrap().parse::<usize>().unwrap();
    assert!(seen[..50].iter().all(|id| number(id) >= 1000), "pending records come first");
    assert!(seen[50..].iter().all(|id| number(id) < 1000));
    let (_, empty) = call(&app, "GET", "/review/queue?page=6", None).await;
    assert_eq!(empty["items"].as_array().unwrap().len(), 0);
    let (s, bad) = call(&app, "GET", "/review/queue?page=0", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad["schema_version"], "1");
}

#[tokio::test]
async fn verdict_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path(), None);
    let (_, q) = call(&app, "GET", "/review/queue", None).await;
    let id = q["items"][0]["triplet"]["triplet_id"].as_str().unwrap().to_string();
    assert_eq!(q["items"][0]["triplet"]["final_status"], "HITLPending");

    let (s, v) = call(&app, "POST", &format!("/review/item/{id}/verdict"), Some(verdict(&id, "Revised", None))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (_, p) = call(&app, "GET", "/review/progress", None).await;
    assert_eq!(p["progress"]["reviewed"], 0);

    let (s, v) = call(&app, "POST", &format!("/review/item/{id}/verdict"), Some(verdict(&id, "Accepted", None))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["item"]["triplet"]["final_status"], "HITLAccepted");
    assert_eq!(v["progress"]["remaining"], 99);

    // Double submit: the first verdict wins and is returned.
    let (s, v) = call(
        &app,
        "POST",
        &format!("/review/item/{id}/verdict"),
        Some(verdict(&id, "Revised", Some("Different answer."))),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["winning_verdict"]["verdict"]["decision"], "Accepted");

    let (s, v) = call(&app, "GET", &format!("/review/item/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["review"]["to"], "HITLAccepted");

    let log = std::fs::read_to_string(dir.path().join("review/review_log.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains(&id)).count(), 1);
}

#[tokio::test]
async fn revised_replaces_output() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path(), None);
    let (_, q) = call(&app, "GET", "/review/queue?page=5", None).await;
    let sampled = q["items"][0]["triplet"]["triplet_id"].as_str().unwrap().to_string();
    assert_eq!(q["items"][0]["triplet"]["final_status"], "AutoAccepted");
    let (s, v) = call(
        &app,
        "POST",
        &format!("/review/item/{sampled}/verdict"),
        Some(verdict(&sampled, "Revised", Some("Keep the set easy."))),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["item"]["triplet"]["final_status"], "HITLRevised");
    let hitl = read_corpus(&dir.path().join("review/hitl_triplets.jsonl")).unwrap();
    let rec = hitl.iter().find(|t| t.triplet_id == sampled).unwrap();
    assert_eq!(rec.expected_output, "Keep the set easy.");
    let validated = read_corpus(&dir.path().join("review/validated_triplets.jsonl")).unwrap();
    assert!(validated.iter().all(|t| t.triplet_id != sampled));
}

#[tokio::test]
async fn not_found_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path(), None);
    let (s, v) = call(&app, "GET", "/review/item/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["schema_version"], "1");
    let (s, _) = call(&app, "POST", "/review/item/nope/verdict", Some(verdict("nope", "Accepted", None))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/review/item/a/verdict", Some(verdict("b", "Accepted", None))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", "/review/item/a/verdict", Some(json!({"decision": "Maybe"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path(), Some("s3cret"));
    let (s, v) = call(&app, "GET", "/review/progress", None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(v["schema_version"], "1");
    let req = Request::builder()
        .uri("/review/progress")
        .header("authorization", "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::OK);
}
