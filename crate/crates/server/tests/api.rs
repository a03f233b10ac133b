use std::collections::HashSet;
use std::sync::OnceLock;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use flowrec_core::pipeline::fit;
use flowrec_core::recommender::{recommend_next, PartialWorkflow};
use flowrec_core::seqmodel::{Model, TrainConfig};
use flowrec_core::synthetic::toy_repository;
use flowrec_server::{router, AppState};

fn toy_model() -> &'static Model {
    static MODEL: OnceLock<Model> = OnceLock::new();
    MODEL.get_or_init(|| {
        let config = TrainConfig {
            dim: 32,
            learning_rate: 0.05,
            negatives: 5,
            max_epochs: 200,
            ..TrainConfig::default()
        };
        fit(&toy_repository(), &config).unwrap().model
    })
}

fn app() -> Router {
    router(AppState::new(toy_model().clone()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(&body.to_string())).await
}

async fn new_session(app: &Router, goal: &str) -> String {
    let (status, body) = post(app, "/sessions", json!({ "goal": goal })).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

async fn add(app: &Router, sid: &str, service: &str, source: Option<&str>) -> (StatusCode, Value) {
    let mut body = json!({ "service_id": service });
    if let Some(s) = source {
        body["source_id"] = json!(s);
    }
    post(app, &format!("/sessions/{sid}/services"), body).await
}

fn ids(list: &Value, key: &str) -> Vec<String> {
    list.as_array()
        .unwrap()
        .iter()
        .map(|v| v[key].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn health_reports_the_model_fingerprint() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["model_fingerprint"], toy_model().fingerprint());
    assert_eq!(body["services"], 30);
}

#[tokio::test]
async fn services_lists_the_vocabulary() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/services", None).await;
    assert_eq!(status, StatusCode::OK);
    let listed = ids(&body["services"], "id");
    assert_eq!(listed.len(), 30);
    assert!(listed.contains(&"c0s0".to_string()));
    assert!(body["services"][0]["name"].is_string());
}

#[tokio::test]
async fn compose_and_recommend() {
    let app = app();
    let sid = new_session(&app, "").await;
    assert_eq!(add(&app, &sid, "c1s0", None).await.0, StatusCode::OK);
    let (status, dag) = add(&app, &sid, "c1s1", Some("c1s0")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ids(&dag["services"], "id"), ["c1s0", "c1s1"]);
    assert_eq!(dag["edges"], json!([{ "source": "c1s0", "sink": "c1s1" }]));

    let (status, fetched) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, dag);

    let (status, rec) = post(&app, &format!("/sessions/{sid}/recommend"), json!({ "anchor_id": "c1s1", "k": 3 })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["anchor_id"], "c1s1");
    let cands = rec["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 3);
    let probs: Vec<f64> = cands.iter().map(|c| c["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] > w[1]), "{probs:?}");
    for c in cands {
        assert!(!["c1s0", "c1s1"].contains(&c["service_id"].as_str().unwrap()));
        assert!(c["name"].is_string());
    }
}

#[tokio::test]
async fn unique_successor_comes_first_with_the_model_probability() {
    let app = app();
    let repo = toy_repository();
    let w = repo.workflow("w2a").unwrap();
    let sid = new_session(&app, &w.goal).await;
    add(&app, &sid, "c2s0", None).await;
    for pos in 1..5 {
        let (status, _) = add(&app, &sid, &format!("c2s{pos}"), Some(&format!("c2s{}", pos - 1))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, rec) = post(&app, &format!("/sessions/{sid}/recommend"), json!({ "anchor_id": "c2s4", "k": 5 })).await;
    assert_eq!(status, StatusCode::OK);
    let top = &rec["candidates"][0];
    assert_eq!(top["service_id"], "c2s5");

    let pw = PartialWorkflow::upstream_of(w, "c2s4").unwrap();
    let expected = recommend_next(toy_model(), &pw, "c2s4", 5).unwrap();
    assert_eq!(expected.candidates[0].service_id, "c2s5");
    assert_eq!(top["probability"].as_f64().unwrap(), expected.candidates[0].probability);
}

#[tokio::test]
async fn cycle_is_rejected_and_listed() {
    let app = app();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c0s0", None).await;
    add(&app, &sid, "c0s1", Some("c0s0")).await;
    add(&app, &sid, "c0s2", Some("c0s1")).await;
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;

    let (status, body) = add(&app, &sid, "c0s0", Some("c0s2")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let cycle: HashSet<String> = body["cycle"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(cycle, ["c0s0", "c0s1", "c0s2"].map(String::from).into());
    assert!(body["error"].as_str().unwrap().contains("cycle"));

    let (_, after) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn duplicates_are_rejected_atomically() {
    let app = app();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c0s0", None).await;
    add(&app, &sid, "c0s1", Some("c0s0")).await;
    assert_eq!(add(&app, &sid, "c0s0", None).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(add(&app, &sid, "c0s1", Some("c0s0")).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    // connecting two services already in the session is allowed
    add(&app, &sid, "c0s2", None).await;
    let (status, dag) = add(&app, &sid, "c0s2", Some("c0s1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(dag["edges"].as_array().unwrap().len(), 2);
    assert_eq!(dag["services"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn unknown_things_are_404() {
    let app = app();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c0s0", None).await;
    let missing = uuid::Uuid::new_v4();
    let cases = [
        call(&app, Method::GET, &format!("/sessions/{missing}"), None).await,
        call(&app, Method::GET, "/sessions/not-a-uuid", None).await,
        add(&app, &sid, "nope", None).await,
        add(&app, &sid, "c0s1", Some("c0s5")).await,
        post(&app, &format!("/sessions/{sid}/recommend"), json!({ "anchor_id": "c0s3", "k": 3 })).await,
        post(&app, &format!("/sessions/{missing}/recommend"), json!({ "anchor_id": "c0s0", "k": 3 })).await,
    ];
    for (status, body) in cases {
        assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
        assert!(body["error"].is_string());
    }
    // the failed source lookup did not add the service
    let (_, dag) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(ids(&dag["services"], "id"), ["c0s0"]);
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let app = app();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c0s0", None).await;
    let services = format!("/sessions/{sid}/services");
    let recommend = format!("/sessions/{sid}/recommend");
    let cases = [
        ("/sessions", "{not json"),
        ("/sessions", r#"{"goal": 3}"#),
        ("/sessions", r#"{"goal": "x", "extra": 1}"#),
        (services.as_str(), "{}"),
        (services.as_str(), r#"{"service_id": ["c0s1"]}"#),
        (recommend.as_str(), r#"{"k": 3}"#),
        (recommend.as_str(), r#"{"anchor_id": "c0s0", "k": -1}"#),
        (recommend.as_str(), r#"{"anchor_id": "c0s0", "k": 0}"#),
    ];
    for (uri, body) in cases {
        let (status, reply) = call(&app, Method::POST, uri, Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {body}: {reply}");
        assert!(reply["error"].is_string());
    }
    let req = Request::post("/sessions").body(Body::from(r#"{"goal": ""}"#)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn goal_update_changes_recommendations_input() {
    let app = app();
    let repo = toy_repository();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c3s0", None).await;
    add(&app, &sid, "c3s1", Some("c3s0")).await;
    let goal = repo.workflow("w3b").unwrap().goal.clone();
    let (status, dag) = call(
        &app,
        Method::PUT,
        &format!("/sessions/{sid}/goal"),
        Some(&json!({ "goal": goal }).to_string()),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(dag["goal"], goal.as_str());

    let (_, rec) = post(&app, &format!("/sessions/{sid}/recommend"), json!({ "anchor_id": "c3s1", "k": 4 })).await;
    let pw: PartialWorkflow = serde_json::from_value(json!({
        "goal": goal,
        "services": dag["services"],
        "edges": dag["edges"],
    }))
    .unwrap();
    let expected = recommend_next(toy_model(), &pw, "c3s1", 4).unwrap();
    let got: Vec<(String, f64)> = rec["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["service_id"].as_str().unwrap().into(), c["probability"].as_f64().unwrap()))
        .collect();
    let want: Vec<(String, f64)> = expected
        .candidates
        .into_iter()
        .map(|c| (c.service_id, c.probability))
        .collect();
    assert_eq!(got, want);
}

#[tokio::test]
async fn accepting_candidates_never_recommends_composed_services() {
    let app = app();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c4s0", None).await;
    let mut anchor = "c4s0".to_string();
    for step in 0..8 {
        let (status, rec) = post(&app, &format!("/sessions/{sid}/recommend"), json!({ "anchor_id": anchor, "k": 5 })).await;
        assert_eq!(status, StatusCode::OK);
        let (_, dag) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
        let composed: HashSet<String> = ids(&dag["services"], "id").into_iter().collect();
        let cands = ids(&rec["candidates"], "service_id");
        assert!(cands.len() <= 5);
        assert!(cands.iter().all(|c| !composed.contains(c)));
        let next = cands[0].clone();
        let (status, dag) = add(&app, &sid, &next, Some(&anchor)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(dag["services"].as_array().unwrap().len(), step + 2);
        assert_eq!(dag["edges"].as_array().unwrap().len(), step + 1);
        anchor = next;
    }
}

#[tokio::test]
async fn idle_sessions_expire() {
    let state = AppState::with_ttl(toy_model().clone(), Duration::from_millis(50));
    let app = router(state.clone());
    let sid = new_session(&app, "").await;
    assert_eq!(state.session_count(), 1);
    tokio::time::sleep(Duration::from_millis(120)).await;
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(state.session_count(), 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_are_not_lost() {
    let app = app();
    let sid = new_session(&app, "").await;
    add(&app, &sid, "c0s0", None).await;
    let mut tasks = Vec::new();
    for chain in 1..5 {
        for pos in 0..6 {
            let (app, sid) = (app.clone(), sid.clone());
            tasks.push(tokio::spawn(async move {
                let (status, _) = add(&app, &sid, &format!("c{chain}s{pos}"), Some("c0s0")).await;
                assert_eq!(status, StatusCode::OK);
                let (status, rec) =
                    post(&app, &format!("/sessions/{sid}/recommend"), json!({ "anchor_id": "c0s0", "k": 30 })).await;
                assert_eq!(status, StatusCode::OK);
                let cands = ids(&rec["candidates"], "service_id");
                assert!(!cands.contains(&format!("c{chain}s{pos}")));
            }));
        }
    }
    for t in tasks {
        t.await.unwrap();
    }
    let (_, dag) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(dag["services"].as_array().unwrap().len(), 25);
    assert_eq!(dag["edges"].as_array().unwrap().len(), 24);
}
