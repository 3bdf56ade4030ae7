//! Shared setup for the integration tests: a platform in a temp directory
//! and helpers to drive its router in-process.

#![allow(dead_code)]

pub mod crash;
pub mod matrix;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use qfaas::auth::{Role, User};
use qfaas::config::Config;
use qfaas::platform::Platform;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub const ADMIN_TOKEN: &str = "admin-token-for-tests-0001";

/// Catalog with no simulated delays, for tests that only care about results.
pub const FAST_CATALOG: &str = r#"[
  {"name": "internal_simulator", "provider": "internal", "type": "internal_simulator", "qubits": 20,
   "perTaskPrice": "0", "perShotPrice": "0"},
  {"name": "ibmq_qasm_simulator", "provider": "ibmq", "type": "external_simulator", "qubits": 32,
   "perTaskPrice": "0", "perShotPrice": "0"},
  {"name": "ibm_cairo", "provider": "ibmq", "type": "qpu", "qubits": 27,
   "perTaskPrice": "0", "perShotPrice": "0"},
  {"name": "ionq_device", "provider": "braket", "type": "qpu", "qubits": 11,
   "perTaskPrice": "0.3", "perShotPrice": "0.01"},
  {"name": "rigetti_m_1", "provider": "braket", "type": "qpu", "qubits": 80,
   "perTaskPrice": "0.3", "perShotPrice": "0.00035"},
  {"name": "sv1", "provider": "braket", "type": "external_simulator", "qubits": 34,
   "perTaskPrice": "0.075", "perShotPrice": "0"}
]"#;

pub struct Harness {
    pub dir: TempDir,
    pub platform: Arc<Platform>,
}

pub fn config(dir: &std::path::Path) -> Config {
    Config {
        data_dir: dir.join("data"),
        cold_start_millis: 0,
        admin_token: Some(ADMIN_TOKEN.into()),
        ..Config::default()
    }
}

/// Config using [`FAST_CATALOG`], written next to the data directory.
pub fn fast_config(dir: &std::path::Path) -> Config {
    let path = dir.join("catalog.json");
    std::fs::write(&path, FAST_CATALOG).unwrap();
    Config {
        catalog: Some(path),
        ..config(dir)
    }
}

impl Harness {
    /// Must run inside a tokio runtime.
    pub fn start() -> Self {
        Self::start_with(|_| {})
    }

    pub fn start_with(tweak: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fast_config(dir.path());
        tweak(&mut cfg);
        let platform = Platform::start(cfg).unwrap();
        Harness { dir, platform }
    }

    pub fn router(&self) -> Router {
        qfaas::gateway::router(self.platform.clone())
    }

    pub fn admin(&self) -> User {
        self.platform.users.authenticate(ADMIN_TOKEN).unwrap()
    }

    pub fn user(&self, name: &str, role: Role) -> (User, String) {
        self.platform.users.create(name, role, None).unwrap()
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Value,
}

pub async fn call(app: &Router, method: &str, path: &str, token: Option<&str>, body: Option<&Value>) -> Reply {
    let mut req = Request::builder()
        .method(Method::from_bytes(method.as_bytes()).unwrap())
        .uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(b).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    Reply { status, headers, body }
}

pub fn qrng_spec(name: &str) -> Value {
    serde_json::json!({
        "name": name,
        "source": "builtin qrng;",
        "dialectTag": "qiskit",
        "postProcessor": "most_frequent",
    })
}

pub fn shor_spec(name: &str) -> Value {
    serde_json::json!({
        "name": name,
        "source": "builtin shor;",
        "dialectTag": "qiskit",
        "postProcessor": "shor_factors",
    })
}
