mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use rdqmap_core::explain::ExplanationBundle;
use rdqmap_core::llm::{ChatClientConfig, ChatMode};
use rdqmap_core::qmap::{ConvApproximator, ConvSettings, Heads};
use rdqmap_core::scene::{Scenario, ScenarioConfig, SceneFile};
use rdqmap_service::api::{router, AppState};
use rdqmap_service::commands::{explain_cmd, ExplainArgs};
use rdqmap_service::Model;

use common::*;

struct Reply {
    status: StatusCode,
    content_type: String,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: &str) -> Reply {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let content_type = response
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        content_type,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

fn fixed_app(chat: ChatClientConfig) -> Router {
    let state = AppState::new(
        Model::Fixed(table_qmaps()),
        ScenarioConfig::default_for(Scenario::Grasp),
        chat,
    )
    .unwrap()
    .with_scene(table_scene())
    .unwrap();
    router(Arc::new(state))
}

fn conv_app() -> Router {
    let sc = ScenarioConfig::default_for(Scenario::Grasp);
    let approx = ConvApproximator::new(
        Heads::new(sc.component_names(), sc.weights()),
        sc.channels(),
        ConvSettings::default(),
        3,
    );
    let state = AppState::new(Model::Conv(approx), sc, ChatClientConfig::default()).unwrap();
    router(Arc::new(state))
}

fn close(x: &Value, y: f64) -> bool {
    (x.as_f64().unwrap() - y).abs() < 1e-9
}

#[tokio::test]
async fn no_scene_is_404_until_one_is_generated() {
    let app = conv_app();
    let health = call(&app, "GET", "/health", "").await;
    assert_eq!(health.status, StatusCode::OK);
    assert_eq!(health.json()["scene_loaded"], false);
    for (method, uri) in [("GET", "/scene"), ("GET", "/qmaps"), ("POST", "/act"), ("POST", "/explain"), ("POST", "/chat")] {
        let body = if uri == "/chat" { r#"{"question":"why?"}"# } else { "" };
        let r = call(&app, method, uri, body).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{method} {uri}");
        assert_eq!(r.json()["error"]["kind"], "no_scene");
    }
    let r = call(&app, "POST", "/scene", r#"{"seed": 7, "scenario": "grasp"}"#).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.content_type, "application/json");
    let expected = ScenarioConfig::default_for(Scenario::Grasp).generate(7).unwrap();
    let scene: SceneFile = serde_json::from_value(r.json()["scene"].clone()).unwrap();
    assert_eq!(scene.into_scene().unwrap(), expected);
    assert_eq!(r.json()["digest"], expected.digest());
}

#[tokio::test]
async fn qmap_grids_match_scene_dimensions() {
    let app = conv_app();
    call(&app, "POST", "/scene", r#"{"seed": 3}"#).await;
    let q = call(&app, "GET", "/qmaps", "").await.json();
    assert_eq!(q["component_names"], serde_json::json!(["color", "shape"]));
    for grid in q["maps"].as_array().unwrap().iter().chain([&q["composite"]]) {
        let rows = grid.as_array().unwrap();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == 16));
    }
    // The composite is the weighted sum, at full precision.
    let (c, s, t) = (&q["maps"][0][5][9], &q["maps"][1][5][9], &q["composite"][5][9]);
    assert_eq!(c.as_f64().unwrap() + s.as_f64().unwrap(), t.as_f64().unwrap());
}

#[tokio::test]
async fn explain_reproduces_the_worked_example() {
    let app = fixed_app(ChatClientConfig::default());
    let r = call(&app, "POST", "/explain", "{}").await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let bundle: ExplanationBundle = serde_json::from_str(&r.body).unwrap();
    let overall: Vec<f64> = ["A", "B", "Selected"].iter().map(|l| bundle.candidate(l).unwrap().overall).collect();
    for (x, y) in overall.iter().zip([1.003, 0.762, 1.073]) {
        assert!((x - y).abs() < 1e-9, "{overall:?}");
    }
    let sa = &bundle.rdx_for("Selected", "A").unwrap().deltas;
    let sb = &bundle.rdx_for("Selected", "B").unwrap().deltas;
    assert!((sa[0] + 0.02).abs() < 1e-9 && (sa[1] - 0.09).abs() < 1e-9, "{sa:?}");
    assert!((sb[0] - 0.54).abs() < 1e-9 && (sb[1] + 0.229).abs() < 1e-9, "{sb:?}");

    let chosen = call(&app, "POST", "/explain", r#"{"pairs": [["Selected", "B"]]}"#).await.json();
    assert_eq!(chosen["rdx"].as_array().unwrap().len(), 1);
    assert!(close(&chosen["rdx"][0]["deltas"][0], 0.54));
}

#[tokio::test]
async fn explain_payload_equals_cli_artifact_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = dir.path().join("scene.json");
    let qmaps_path = dir.path().join("qmaps.json");
    std::fs::write(&scene_path, table_scene().to_json()).unwrap();
    std::fs::write(&qmaps_path, serde_json::to_string(&table_qmaps()).unwrap()).unwrap();
    let out = dir.path().join("out");
    explain_cmd(&ExplainArgs {
        checkpoint: None,
        qmaps: Some(qmaps_path),
        scene: scene_path,
        pairs: vec![("Selected".into(), "B".into())],
        pixels: vec![SELECTED],
        out_dir: out.clone(),
    })
    .unwrap();
    let app = fixed_app(ChatClientConfig::default());
    let r = call(&app, "POST", "/explain", r#"{"pairs":[["Selected","B"]],"pixels":[{"u":1,"v":2}]}"#).await;
    assert_eq!(r.body, std::fs::read_to_string(out.join("bundle.json")).unwrap());
    // Served twice (second from cache): still identical.
    let again = call(&app, "POST", "/explain", r#"{"pixels":[{"u":1,"v":2}],"pairs":[["Selected","B"]]}"#).await;
    assert_eq!(again.body, r.body);
}

#[tokio::test]
async fn malformed_requests_are_400() {
    let app = fixed_app(ChatClientConfig::default());
    for (uri, body) in [
        ("/explain", "{not json"),
        ("/explain", r#"{"pairz": []}"#),
        ("/act", r#"{"pixel": {"u": 9, "v": 0}}"#),
        ("/scene", r#"{}"#),
        ("/chat", r#"{"question": "  "}"#),
    ] {
        let r = call(&app, "POST", uri, body).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{uri} {body}: {}", r.body);
        assert!(r.json()["error"]["message"].is_string());
    }
    let missing = call(&app, "POST", "/explain", r#"{"pairs": [["Selected", "Z"]]}"#).await;
    assert_eq!(missing.status, StatusCode::BAD_REQUEST);
    assert_eq!(missing.json()["error"]["kind"], "missing_pair");
    // A trained model is tied to its scenario.
    let conv = conv_app();
    let wrong = call(&conv, "POST", "/scene", r#"{"seed": 1, "scenario": "land"}"#).await;
    assert_eq!(wrong.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn acting_advances_the_scene_and_finished_episodes_conflict() {
    let app = fixed_app(ChatClientConfig::default());
    let before = call(&app, "POST", "/explain", "").await.json();
    let first = call(&app, "POST", "/act", "").await;
    assert_eq!(first.status, StatusCode::OK, "{}", first.body);
    let step = first.json();
    // Greedy pick is Selected: a blue cube, colour 0.8 plus shape 1.
    assert_eq!(step["action"]["pixel"], serde_json::json!({"u": 1, "v": 2}));
    assert_eq!(step["info"]["kind"], "grasped");
    assert!(close(&step["reward"]["components"][0], 0.8));
    assert_eq!(step["done"], false);

    // The cached explanation was for the old scene.
    let after = call(&app, "POST", "/explain", "").await.json();
    assert_ne!(after["scene_id"], before["scene_id"]);
    assert_eq!(after["scene_id"], step["scene_digest"]);
    let scene = call(&app, "GET", "/scene", "").await.json();
    assert_eq!(scene["history"].as_array().unwrap().len(), 1);

    for pixel in [(0, 0), (2, 0)] {
        let body = format!(r#"{{"pixel": {{"u": {}, "v": {}}}}}"#, pixel.0, pixel.1);
        assert_eq!(call(&app, "POST", "/act", &body).await.status, StatusCode::OK);
    }
    let done = call(&app, "GET", "/scene", "").await.json();
    assert_eq!(done["scene"]["done"], true);
    let r = call(&app, "POST", "/act", "").await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"]["kind"], "episode_finished");
}

#[tokio::test]
async fn reading_while_writing_sees_whole_snapshots() {
    let app = conv_app();
    call(&app, "POST", "/scene", r#"{"seed": 5}"#).await;
    let mut tasks = Vec::new();
    for i in 0..12 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            if i % 4 == 0 {
                call(&app, "POST", "/act", "").await.status
            } else {
                let q = call(&app, "GET", "/qmaps", "").await;
                let digest = q.json()["scene_digest"].clone();
                assert!(digest.is_string());
                q.status
            }
        }));
    }
    for t in tasks {
        let status = t.await.unwrap();
        assert!(status == StatusCode::OK || status == StatusCode::CONFLICT, "{status}");
    }
    let scene = call(&app, "GET", "/scene", "").await.json();
    let steps = scene["history"].as_array().unwrap().len();
    assert!(steps <= 3);
}

#[tokio::test]
async fn stub_chat_answers_from_the_bundle() {
    let app = fixed_app(ChatClientConfig::default());
    let shallow = call(&app, "POST", "/chat", r#"{"question": "why is pixel Selected chosen to pick up?"}"#).await;
    assert_eq!(shallow.status, StatusCode::OK, "{}", shallow.body);
    let answer = shallow.json()["answer"].as_str().unwrap().to_string();
    assert!(answer.contains("highest Q-value overall (1.073)"), "{answer}");
    assert_eq!(shallow.json()["turns"], 3);

    let contrast = call(&app, "POST", "/chat", r#"{"question": "why is pixel Selected preferred over pixel B?"}"#).await;
    let text = contrast.json()["answer"].as_str().unwrap().to_string();
    assert!(text.contains("higher color value"), "{text}");
    assert_eq!(contrast.json()["turns"], 5);

    let repeat = call(&app, "POST", "/chat", r#"{"question": "why is pixel Selected chosen to pick up?"}"#).await;
    assert_eq!(repeat.json()["answer"].as_str().unwrap(), answer);
}

#[tokio::test]
async fn remote_chat_failures_are_502() {
    let (endpoint, seen) = mock_chat_server(500, "upstream broke").await;
    let failing = fixed_app(ChatClientConfig {
        mode: ChatMode::Remote,
        endpoint: Some(endpoint),
        credential_env: "RDQMAP_TEST_API_KEY_FAILING".into(),
        ..ChatClientConfig::default()
    });
    std::env::set_var("RDQMAP_TEST_API_KEY_FAILING", "k-1");
    let r = call(&failing, "POST", "/chat", r#"{"question": "why?"}"#).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert!(r.json()["error"]["message"].as_str().unwrap().contains("500"));
    assert_eq!(seen.lock().unwrap().len(), 1);

    let no_key = fixed_app(ChatClientConfig {
        mode: ChatMode::Remote,
        endpoint: Some("http://127.0.0.1:9/never".into()),
        credential_env: "RDQMAP_TEST_API_KEY_NEVER_SET".into(),
        ..ChatClientConfig::default()
    });
    let r = call(&no_key, "POST", "/chat", r#"{"question": "why?"}"#).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.json()["error"]["kind"], "credential");
}

#[tokio::test]
async fn remote_chat_round_trip() {
    let (endpoint, seen) = mock_chat_server(200, CANNED_ANSWER).await;
    std::env::set_var("RDQMAP_TEST_API_KEY_OK", "k-2");
    let app = fixed_app(ChatClientConfig {
        mode: ChatMode::Remote,
        endpoint: Some(endpoint),
        credential_env: "RDQMAP_TEST_API_KEY_OK".into(),
        ..ChatClientConfig::default()
    });
    let r = call(&app, "POST", "/chat", r#"{"question": "why is pixel Selected chosen to pick up?"}"#).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.json()["answer"], "Selected has the highest overall value.");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].0, "Bearer k-2");
    let sent: Value = serde_json::from_str(&seen[0].1).unwrap();
    assert_eq!(sent["messages"][0]["role"], "system");
    assert!(sent["messages"][0]["content"].as_str().unwrap().contains("overall: 1.073"));
    assert_eq!(sent["messages"][1]["role"], "user");
}
