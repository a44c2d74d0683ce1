#![allow(dead_code)]
pub mod checks;


use std::sync::Arc;

use reqwest::{Client, Method, StatusCode};
use serde_json::{json, Value};
use vca_survey::flow::FlowCatalog;
use vca_survey::gateway::{Gateway, GatewayConfig, ManualClock};
use vca_survey::service::{Service, ServiceConfig};
use vca_survey::store::EventStore;
use vca_survey::time::Timestamp;

pub const ADMIN: &str = "admin-secret";
/// 2018-06-18 09:00 in New York.
pub const T0: Timestamp = Timestamp(1_529_326_800_000);

pub struct TestServer {
    pub base: String,
    pub gateway: Gateway,
    pub clock: Arc<ManualClock>,
    pub client: Client,
    pub task: tokio::task::JoinHandle<()>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub async fn spawn_at(start: Timestamp) -> TestServer {
    let cfg = ServiceConfig { seed: Some(7), ..ServiceConfig::default() };
    let service = Arc::new(Service::new(Arc::new(EventStore::in_memory()), FlowCatalog::builtin(), cfg).unwrap());
    let clock = Arc::new(ManualClock::new(start));
    let gcfg = GatewayConfig { admin_token: ADMIN.into(), ..GatewayConfig::default() };
    let gateway = Gateway::new(service, clock.clone(), gcfg);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let router = gateway.router();
    let task = tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    TestServer { base, gateway, clock, client: Client::new(), task }
}

pub async fn spawn() -> TestServer {
    spawn_at(T0 - 30 * 60_000).await
}

impl TestServer {
    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.client.request(method, format!("{}{}", self.base, path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub async fn get(&self, path: &str, token: &str) -> (StatusCode, Value) {
        self.call(Method::GET, path, Some(token), None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, path, Some(token), Some(body)).await
    }

    /// Enrolls `user` and returns their API token.
    pub async fn enroll(&self, user: &str) -> String {
        let (status, body) =
            self.post("/v1/users", ADMIN, json!({"user_id": user, "password": format!("pw-{user}")})).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["api_token"].as_str().unwrap().to_string()
    }

    pub async fn start(&self, token: &str, user: &str, flow: &str) -> (String, Value) {
        let (status, body) = self.post("/v1/sessions", token, json!({"user": user, "flow": flow})).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        (body["session_id"].as_str().unwrap().to_string(), body)
    }

    pub async fn say(&self, token: &str, session: &str, text: &str) -> Value {
        self.clock.advance(1_000);
        let (status, body) = self.post(&format!("/v1/sessions/{session}/utterances"), token, json!({"text": text})).await;
        assert_eq!(status, StatusCode::OK, "{text}: {body}");
        body
    }

    pub async fn kinds(&self, token: &str, session: &str) -> Vec<String> {
        let (_, events) = self.get(&format!("/v1/sessions/{session}/events"), token).await;
        events.as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap().to_string()).collect()
    }
}
