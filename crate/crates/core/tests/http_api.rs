use std::sync::Arc;

use affectrace::http::router;
use affectrace::service::{PasswordCost, ProjectService, ServiceConfig};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    let config = ServiceConfig {
        base_url: "https://annotate.example.org".into(),
        password_cost: PasswordCost::insecure_fast(),
        rng_seed: Some(11),
        ..ServiceConfig::default()
    };
    router(Arc::new(ProjectService::in_memory(config)))
}

async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn json_call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, token, body).await;
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn researcher(app: &Router, name: &str) -> String {
    let creds = json!({"username": name, "password": "correct horse battery"});
    let (s, _) = json_call(app, Method::POST, "/api/accounts", None, Some(creds.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, body) = json_call(app, Method::POST, "/api/login", None, Some(creds)).await;
    assert_eq!(s, StatusCode::OK);
    body["token"].as_str().unwrap().to_string()
}

fn project(duration_ms: u64) -> Value {
    json!({
        "title": "Arousal study",
        "target_label": "Arousal",
        "tool": "RANKTRACE",
        "videos": [
            {"id": "apex", "kind": "YOUTUBE", "locator": "https://www.youtube.com/watch?v=abcdefghijk", "duration_ms": duration_ms},
            {"id": "got", "kind": "YOUTUBE", "locator": "https://youtu.be/abcdefghijk", "duration_ms": duration_ms}
        ],
        "ordering": {"kind": "SEQUENCE"},
        "post_message": "Thanks!",
        "survey_link": "https://survey.example.org/x",
        "link_key": "study-one"
    })
}

#[tokio::test]
async fn full_participant_flow_over_http() {
    let app = app();
    let token = researcher(&app, "alice").await;

    let (s, created) = json_call(&app, Method::POST, "/api/projects", Some(&token), Some(project(100_000))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["share_link"], "https://annotate.example.org/a/study-one");
    let pid = created["project_id"].as_u64().unwrap();

    let (s, landing) = json_call(&app, Method::GET, "/a/study-one", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(landing["video_count"], 2);

    let (s, session) = json_call(
        &app,
        Method::POST,
        "/api/sessions",
        None,
        Some(json!({"link_key": "study-one", "participant_id": "p1"})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let sid = session["session_id"].as_u64().unwrap();
    assert_eq!(session["first"]["video"]["id"], "apex");

    let batch = json!({"entries": [
        {"type": "event", "video_time": 0, "kind": "KEY_DOWN_UP"},
        {"type": "sample", "video_time": 100, "value": 1.0},
        {"type": "event", "video_time": 500, "kind": "KEY_UP_UP"},
        {"type": "event", "video_time": 30_000, "kind": "PAUSE"}
    ]});
    let uri = format!("/api/sessions/{sid}/videos/0/entries");
    let (s, ack) = json_call(&app, Method::POST, &uri, None, Some(batch)).await;
    assert_eq!(s, StatusCode::OK, "{ack}");
    assert_eq!(ack, json!({"accepted": 4, "persisted": true}));

    let (s, fin) = json_call(&app, Method::POST, &format!("/api/sessions/{sid}/videos/0/finish"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(fin["status"], "COMPLETED");
    assert_eq!(fin["next"]["video"]["id"], "got");

    // Appending to the finished video is stale.
    let (s, err) = json_call(&app, Method::POST, &uri, None, Some(json!({"entries": []}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "StaleVideoIndex");

    let (s, fin) = json_call(&app, Method::POST, &format!("/api/sessions/{sid}/videos/1/finish"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(fin["status"], "ABANDONED");
    assert!(fin["next"].is_null());
    assert_eq!(fin["survey_link"], "https://survey.example.org/x");

    let (s, list) = json_call(&app, Method::GET, "/api/projects", Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list[0]["sessions_started"], 1);
    assert_eq!(list[0]["sessions_completed"], 1);
    assert_eq!(list[0]["videos_completed"], 1);

    let (s, csv) = call(&app, Method::GET, &format!("/api/projects/{pid}/export.csv"), Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with(affectrace::store::CSV_HEADER));
    assert!(text.contains(",EVENT,500,KEY_UP_UP,"));
    assert!(text.contains(",STATUS,30000,COMPLETED,"));
}

#[tokio::test]
async fn errors_use_the_documented_status_codes() {
    let app = app();
    let alice = researcher(&app, "alice").await;
    let bob = researcher(&app, "bob").await;
    let (_, created) = json_call(&app, Method::POST, "/api/projects", Some(&alice), Some(project(60_000))).await;
    let pid = created["project_id"].as_u64().unwrap();

    let (s, body) = json_call(&app, Method::GET, "/api/projects", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"]["code"], "Unauthenticated");

    let (s, body) = json_call(&app, Method::GET, &format!("/api/projects/{pid}/export.csv"), Some(&bob), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN, "{body}");

    let (s, body) = json_call(&app, Method::DELETE, &format!("/api/projects/{pid}"), Some(&bob), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN, "{body}");

    let mut bad = project(60_000);
    bad["videos"] = json!([]);
    bad["link_key"] = json!("other-key");
    let (s, body) = json_call(&app, Method::POST, "/api/projects", Some(&alice), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "videos");

    let (s, body) = json_call(&app, Method::POST, "/api/projects", Some(&alice), Some(json!({"title": 3}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}");

    let (s, _) = json_call(&app, Method::GET, "/a/nope-nope", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, session) =
        json_call(&app, Method::POST, "/api/sessions", None, Some(json!({"link_key": "study-one"}))).await;
    let sid = session["session_id"].as_u64().unwrap();
    let uri = format!("/api/sessions/{sid}/videos/0/entries");
    let (s, body) = json_call(
        &app,
        Method::POST,
        &uri,
        None,
        Some(json!({"entries": [{"type": "event", "video_time": 10, "kind": "KEY_UP_UP"}]})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "MalformedEventStream");

    let (s, _) = json_call(&app, Method::POST, "/api/sessions/999/videos/0/finish", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = json_call(&app, Method::DELETE, &format!("/api/projects/{pid}"), Some(&alice), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = json_call(&app, Method::GET, "/a/study-one", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn test_mode_sessions_leave_no_trace() {
    let app = app();
    let token = researcher(&app, "alice").await;
    let (_, created) = json_call(&app, Method::POST, "/api/projects", Some(&token), Some(project(60_000))).await;
    let pid = created["project_id"].as_u64().unwrap();

    let (_, session) = json_call(
        &app,
        Method::POST,
        "/api/sessions",
        None,
        Some(json!({"link_key": "study-one", "test_mode": true})),
    )
    .await;
    let sid = session["session_id"].as_u64().unwrap();
    let (_, ack) = json_call(
        &app,
        Method::POST,
        &format!("/api/sessions/{sid}/videos/0/entries"),
        None,
        Some(json!({"entries": [{"type": "event", "video_time": 40_000, "kind": "PAUSE"}]})),
    )
    .await;
    assert_eq!(ack["persisted"], false);
    let (_, fin) = json_call(&app, Method::POST, &format!("/api/sessions/{sid}/videos/0/finish"), None, None).await;
    assert_eq!(fin["status"], "COMPLETED");

    let (_, list) = json_call(&app, Method::GET, "/api/projects", Some(&token), None).await;
    assert_eq!(list[0]["sessions_started"], 0);
    assert_eq!(list[0]["sessions_completed"], 0);
    let (_, csv) = call(&app, Method::GET, &format!("/api/projects/{pid}/export.csv"), Some(&token), None).await;
    assert_eq!(csv, format!("{}\r\n", affectrace::store::CSV_HEADER).into_bytes());
}
