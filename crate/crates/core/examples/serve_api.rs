//! Starts the HTTP API on a local port, drives one participant through it
//! with plain HTTP/1.1 requests and downloads the export.
//!
//! cargo run --example serve_api

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use affectrace::http::serve;
use affectrace::service::{PasswordCost, ProjectService, ServiceConfig};
use serde_json::{json, Value};

fn request(addr: SocketAddr, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (u16, String) {
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let auth = token.map(|t| format!("Authorization: Bearer {t}\r\n")).unwrap_or_default();
    let mut stream = TcpStream::connect(addr).expect("server is up");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n{auth}Content-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let payload = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, payload)
}

fn main() {
    let addr: SocketAddr = "127.0.0.1:38471".parse().unwrap();
    let service = Arc::new(ProjectService::in_memory(ServiceConfig {
        password_cost: PasswordCost::insecure_fast(),
        base_url: format!("http://{addr}"),
        ..ServiceConfig::default()
    }));
    let runtime = tokio::runtime::Runtime::new().unwrap();
    runtime.spawn(serve(addr, service));
    std::thread::sleep(std::time::Duration::from_millis(200));

    let creds = json!({"username": "alice", "password": "long enough password"});
    request(addr, "POST", "/api/accounts", None, Some(creds.clone()));
    let (_, login) = request(addr, "POST", "/api/login", None, Some(creds));
    let token = serde_json::from_str::<Value>(&login).unwrap()["token"].as_str().unwrap().to_string();

    let project = json!({
        "title": "Gameplay", "target_label": "Arousal", "tool": "BTRACE",
        "videos": [{"id": "match", "kind": "YOUTUBE", "locator": "https://youtu.be/abcdefghijk", "duration_ms": 20000}],
        "ordering": {"kind": "SEQUENCE"}, "link_key": "gameplay"
    });
    let (status, created) = request(addr, "POST", "/api/projects", Some(&token), Some(project));
    println!("create project -> {status} {created}");

    let (_, session) = request(addr, "POST", "/api/sessions", None, Some(json!({"link_key": "gameplay"})));
    let session: Value = serde_json::from_str(&session).unwrap();
    let sid = &session["session_id"];
    let entries = json!({"entries": [
        {"type": "event", "video_time": 1200, "kind": "KEY_DOWN_UP"},
        {"type": "sample", "video_time": 1200, "value": 1},
        {"type": "event", "video_time": 1300, "kind": "KEY_UP_UP"},
        {"type": "event", "video_time": 6000, "kind": "PAUSE"}
    ]});
    let (status, ack) = request(addr, "POST", &format!("/api/sessions/{sid}/videos/0/entries"), None, Some(entries));
    println!("append -> {status} {ack}");
    let (status, fin) = request(addr, "POST", &format!("/api/sessions/{sid}/videos/0/finish"), None, None);
    println!("finish -> {status} {fin}");

    let (_, summary) = request(addr, "GET", "/api/projects", Some(&token), None);
    println!("summary -> {summary}");
    let pid = serde_json::from_str::<Value>(&created).unwrap()["project_id"].clone();
    let (_, csv) = request(addr, "GET", &format!("/api/projects/{pid}/export.csv"), Some(&token), None);
    println!("\n{csv}");
}
