//! Shared fixtures: the worked two-component example and a tiny mock
//! chat-completion server.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;

use rdqmap_core::qmap::{QMap, QMapSet};
use rdqmap_core::scene::{ColorId, GridScene, Pixel, Scenario, SceneObject, Shape};

pub const A: Pixel = Pixel { u: 0, v: 0 };
pub const B: Pixel = Pixel { u: 2, v: 0 };
pub const SELECTED: Pixel = Pixel { u: 1, v: 2 };

fn cube(id: u32, rank: u8, p: Pixel) -> SceneObject {
    SceneObject {
        id,
        shape: Shape::Cube,
        color: ColorId::ranked(rank),
        footprint: vec![p],
        removed: false,
    }
}

/// A 4x4 grasp scene with a blue cube at A and Selected and a red cube at B.
pub fn table_scene() -> GridScene {
    let mut scene = GridScene::empty(Scenario::Grasp, 4, 4);
    scene.objects = vec![cube(0, 4, A), cube(1, 0, B), cube(2, 4, SELECTED)];
    scene
}

/// Colour and shape maps holding the worked example's values, zero elsewhere.
pub fn table_qmaps() -> QMapSet {
    let mut color = QMap::zeros(4, 4);
    let mut shape = QMap::zeros(4, 4);
    for (p, c, s) in [(A, 0.577, 0.426), (B, 0.017, 0.745), (SELECTED, 0.557, 0.516)] {
        color.set(p, c);
        shape.set(p, s);
    }
    QMapSet::new(vec![color, shape], vec!["color".into(), "shape".into()], vec![1.0, 1.0]).unwrap()
}

/// What the mock server saw: (authorization header, request body).
pub type Seen = Arc<Mutex<Vec<(String, String)>>>;

/// Serve `status` and `body` for every POST on a random local port.
pub async fn mock_chat_server(status: u16, body: &'static str) -> (String, Seen) {
    let seen: Seen = Arc::default();
    let log = seen.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move |headers: HeaderMap, request: String| {
            let log = log.clone();
            async move {
                let auth = headers
                    .get("authorization")
                    .and_then(|v| v.to_str().ok())
                    .unwrap_or_default()
                    .to_string();
                log.lock().unwrap().push((auth, request));
                (StatusCode::from_u16(status).unwrap(), body)
            }
        }),
    );
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

pub const CANNED_ANSWER: &str =
    r#"{"choices":[{"message":{"role":"assistant","content":"Selected has the highest overall value."}}]}"#;
