//! REST surface: role matrix, token fuzzing, ownership rules, the API
//! description and the monitoring snapshot.

mod common;

use std::collections::BTreeSet;

use common::matrix::{self, Caller, Expect};
use common::{call, qrng_spec, shor_spec, Harness, ADMIN_TOKEN};
use proptest::prelude::*;
use qfaas::auth::Role;
use qfaas::gateway::{OPENAPI, ROUTES};
use serde_json::{json, Value};

#[tokio::test(flavor = "multi_thread")]
async fn role_matrix_has_no_deviations() {
    let h = Harness::start();
    let (deviations, cells) = matrix::sweep(&h).await;
    assert_eq!(cells, ROUTES.len() * Caller::ALL.len());
    for d in &deviations {
        eprintln!(
            "{} {} as {}: expected {:?}, got {} {}",
            d.method, d.path, d.caller, d.expected, d.status, d.body
        );
    }
    assert!(deviations.is_empty());
}

#[test]
fn table_follows_the_role_hierarchy() {
    for r in ROUTES {
        let allowed: Vec<bool> = [Role::EndUser, Role::Engineer, Role::Administrator]
            .into_iter()
            .map(|role| matrix::expected(r, Caller::As(role)) == Expect::Allowed)
            .collect();
        // once a role is allowed every higher role is too
        assert!(allowed.windows(2).all(|w| !w[0] || w[1]), "{} {}", r.method, r.path);
        assert!(allowed[2], "administrators reach every route");
    }
    let admin_only: BTreeSet<&str> = ROUTES
        .iter()
        .filter(|r| r.min_role == Some(Role::Administrator))
        .map(|r| r.path)
        .collect();
    assert!(admin_only.iter().all(|p| p.starts_with("/api/users") || p.ends_with("/operational")));
}

#[test]
fn openapi_lists_exactly_the_routes() {
    let doc: Value = serde_json::from_str(OPENAPI).unwrap();
    let mut documented = BTreeSet::new();
    for (path, ops) in doc["paths"].as_object().unwrap() {
        for (method, op) in ops.as_object().unwrap() {
            let role = op["x-min-role"].as_str().map(str::to_owned);
            documented.insert((method.to_uppercase(), path.clone(), role));
        }
    }
    let table: BTreeSet<_> = ROUTES
        .iter()
        .map(|r| (r.method.to_owned(), r.path.to_owned(), r.min_role.map(|x| x.as_str().to_owned())))
        .collect();
    assert_eq!(documented, table);
}

fn bad_authorization() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        Just(None),
        "[a-f0-9]{0,80}".prop_map(|t| Some(format!("Bearer {t}"))),
        "[ -~]{0,40}".prop_map(Some),
        Just(Some("Basic YWRtaW46YWRtaW4=".to_owned())),
        Just(Some(format!("Token {ADMIN_TOKEN}"))),
        Just(Some("Bearer".to_owned())),
    ]
}

fn protected_route() -> impl Strategy<Value = usize> {
    let idx: Vec<usize> = (0..ROUTES.len()).filter(|&i| ROUTES[i].min_role.is_some()).collect();
    proptest::sample::select(idx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn requests_without_a_valid_token_are_rejected(
        route in protected_route(),
        auth in bad_authorization(),
        body in proptest::option::of("[ -~]{0,64}"),
        seg in "[a-z0-9_-]{1,12}",
    ) {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let status = rt.block_on(async {
            let h = Harness::start();
            let app = h.router();
            let r = &ROUTES[route];
            let path = r.path.replace("{id}", &seg).replace("{name}", &seg);
            let mut req = axum::http::Request::builder().method(r.method).uri(path);
            if let Some(a) = &auth {
                req = req.header("authorization", a.as_str());
            }
            let req = req.body(axum::body::Body::from(body.unwrap_or_default())).unwrap();
            use tower::ServiceExt;
            app.oneshot(req).await.unwrap().status().as_u16()
        });
        prop_assert_eq!(status, 401);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn credentials_are_private_to_their_owner() {
    let h = Harness::start();
    let app = h.router();
    let (a, ta) = h.user("alice", Role::Engineer);
    let (b, tb) = h.user("bob", Role::EndUser);
    let r = call(&app, "PUT", "/api/providers/ibmq/credential", Some(&ta), Some(&json!({"credential": "alice-secret"}))).await;
    assert_eq!(r.status, 200);
    assert_eq!(r.body["credential"], "****cret");
    let r = call(&app, "GET", &format!("/api/users/{}/credentials", a.id), Some(&tb), None).await;
    assert_eq!(r.status, 403);
    // administrators cannot read them either
    let r = call(&app, "GET", &format!("/api/users/{}/credentials", a.id), Some(ADMIN_TOKEN), None).await;
    assert_eq!(r.status, 403);
    let r = call(&app, "GET", &format!("/api/users/{}/credentials", b.id), Some(&tb), None).await;
    assert_eq!(r.body["items"], json!([]));
    let r = call(&app, "GET", "/api/providers/credentials", Some(&ta), None).await;
    assert_eq!(r.body["items"][0]["provider"], "ibmq");
    assert!(!r.body.to_string().contains("alice-secret"));
    let r = call(&app, "PUT", "/api/providers/nowhere/credential", Some(&ta), Some(&json!({"credential": "x"}))).await;
    assert_eq!((r.status.as_u16(), r.body["code"].as_str()), (404, Some("ProviderNotFound")));
}

#[tokio::test(flavor = "multi_thread")]
async fn error_bodies_and_status_codes() {
    let h = Harness::start();
    let app = h.router();
    let r = call(&app, "GET", "/api/nothing-here", Some(ADMIN_TOKEN), None).await;
    assert_eq!((r.status.as_u16(), r.body["code"].as_str()), (404, Some("NotFound")));
    let r = call(&app, "PATCH", "/api/functions", Some(ADMIN_TOKEN), None).await;
    assert_eq!(r.status.as_u16(), 405);
    let r = call(&app, "POST", "/api/functions", Some(ADMIN_TOKEN), Some(&json!("not an object"))).await;
    assert_eq!((r.status.as_u16(), r.body["code"].as_str()), (400, Some("BadRequest")));
    let r = call(&app, "POST", "/api/functions", Some(ADMIN_TOKEN), Some(&json!({"name": "X", "source": "builtin qrng;", "dialectTag": "qiskit"}))).await;
    assert_eq!(r.body["code"], "FunctionNameError");
    let bad = json!({"name": "bad", "source": "qubits 1;\nh 0\nmeasure all;", "dialectTag": "qiskit"});
    let r = call(&app, "POST", "/api/functions", Some(ADMIN_TOKEN), Some(&bad)).await;
    assert_eq!((r.status.as_u16(), r.body["code"].as_str()), (422, Some("BuildError")));
    assert!(r.body["detail"]["line"].is_u64());
    let r = call(&app, "POST", "/function/missing", Some(ADMIN_TOKEN), None).await;
    assert_eq!((r.status.as_u16(), r.body["code"].as_str()), (404, Some("FunctionNotFound")));
    let r = call(&app, "GET", "/healthz", None, None).await;
    assert_eq!(r.body["status"], "ok");
    let r = call(&app, "GET", "/api/backends/rigetti_m_1/cost?tasks=1&shots=10000", Some(ADMIN_TOKEN), None).await;
    assert_eq!(r.body["cost_cents"], "3.80");
    let r = call(&app, "GET", "/api/backends/rigetti_m_1/cost?shots=-4", Some(ADMIN_TOKEN), None).await;
    assert_eq!(r.status.as_u16(), 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn invocation_over_http_carries_the_version_header() {
    let h = Harness::start();
    let app = h.router();
    let r = call(&app, "POST", "/api/functions", Some(ADMIN_TOKEN), Some(&shor_spec("shor"))).await;
    assert_eq!(r.status.as_u16(), 201);
    let body = json!({"input": 15, "provider": "ibmq", "shots": 100, "wait_for_result": true,
        "backend_info": {"hub": "ibm-q-melbourne", "api_token": "tok", "device": "ibm_cairo", "autoselect": false}});
    let r = call(&app, "POST", "/function/shor", Some(ADMIN_TOKEN), Some(&body)).await;
    assert_eq!(r.status.as_u16(), 200, "{}", r.body);
    assert_eq!(r.headers["x-function-version"], "1");
    assert_eq!(r.body["result"], json!([[3, 5]]));
    assert_eq!(r.body["backend_device"], "ibm_cairo");
    let r = call(&app, "POST", "/function/shor", Some(ADMIN_TOKEN), Some(&json!({"input": 4, "waitForResult": true}))).await;
    assert_eq!((r.status.as_u16(), r.body["code"].as_str()), (400, Some("InvalidN")));
}

#[tokio::test(flavor = "multi_thread")]
async fn jobs_are_owner_scoped_over_http() {
    let h = Harness::start();
    let app = h.router();
    call(&app, "POST", "/api/functions", Some(ADMIN_TOKEN), Some(&qrng_spec("qrng"))).await;
    let (_, ta) = h.user("alice", Role::EndUser);
    let (_, tb) = h.user("bob", Role::EndUser);
    let r = call(&app, "POST", "/function/qrng", Some(&ta), Some(&json!({"input": 3, "waitForResult": true}))).await;
    let job = r.body["detail"]["provider_info"]["job_id"].as_str().unwrap().to_owned();
    assert_eq!(call(&app, "GET", &format!("/api/jobs/{job}"), Some(&ta), None).await.status, 200);
    assert_eq!(call(&app, "GET", &format!("/api/jobs/{job}"), Some(&tb), None).await.status, 403);
    assert_eq!(call(&app, "DELETE", &format!("/api/jobs/{job}"), Some(&tb), None).await.status, 403);
    assert_eq!(call(&app, "GET", &format!("/api/jobs/{job}"), Some(ADMIN_TOKEN), None).await.status, 200);
    let r = call(&app, "GET", "/api/jobs", Some(&tb), None).await;
    assert_eq!(r.body["total"], 0);
    let r = call(&app, "GET", "/api/jobs?status=done&limit=1", Some(&ta), None).await;
    assert_eq!((r.body["total"].as_u64(), r.body["items"].as_array().unwrap().len()), (Some(1), 1));
    assert_eq!(call(&app, "DELETE", &format!("/api/jobs/{job}"), Some(&ta), None).await.status, 204);
    assert_eq!(call(&app, "GET", &format!("/api/jobs/{job}"), Some(&ta), None).await.status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn user_administration() {
    let h = Harness::start();
    let app = h.router();
    let r = call(&app, "POST", "/api/users", Some(ADMIN_TOKEN), Some(&json!({"username": "eve", "role": "end_user"}))).await;
    assert_eq!(r.status.as_u16(), 201);
    let id = r.body["user"]["id"].as_str().unwrap().to_owned();
    let token = r.body["token"].as_str().unwrap().to_owned();
    assert_eq!(token.len(), 64);
    let r = call(&app, "POST", "/api/users", Some(ADMIN_TOKEN), Some(&json!({"username": "eve", "role": "end_user"}))).await;
    assert_eq!(r.status.as_u16(), 409);
    assert_eq!(call(&app, "POST", "/api/functions", Some(&token), Some(&qrng_spec("x"))).await.status, 403);
    let r = call(&app, "PUT", &format!("/api/users/{id}/role"), Some(ADMIN_TOKEN), Some(&json!({"role": "engineer"}))).await;
    assert_eq!(r.body["role"], "engineer");
    assert_eq!(call(&app, "POST", "/api/functions", Some(&token), Some(&qrng_spec("x"))).await.status, 201);
    let r = call(&app, "POST", &format!("/api/users/{id}/token"), Some(ADMIN_TOKEN), None).await;
    let fresh = r.body["token"].as_str().unwrap();
    assert_eq!(call(&app, "GET", "/api/users/me", Some(&token), None).await.status, 401);
    assert_eq!(call(&app, "GET", "/api/users/me", Some(fresh), None).await.body["username"], "eve");
    assert_eq!(call(&app, "DELETE", &format!("/api/users/{id}"), Some(ADMIN_TOKEN), None).await.status, 204);
    assert_eq!(call(&app, "GET", "/api/users/me", Some(fresh), None).await.status, 401);
}

#[tokio::test(flavor = "multi_thread")]
async fn system_status_matches_the_job_store() {
    let h = Harness::start();
    let app = h.router();
    call(&app, "POST", "/api/functions", Some(ADMIN_TOKEN), Some(&qrng_spec("qrng"))).await;
    for i in 0..6 {
        let wait = i % 2 == 0;
        call(&app, "POST", "/function/qrng", Some(ADMIN_TOKEN), Some(&json!({"input": 3, "waitForResult": wait}))).await;
    }
    call(&app, "POST", "/function/qrng", Some(ADMIN_TOKEN), Some(&json!({"input": 99}))).await;
    // let the unwaited jobs finish
    for j in h.platform.jobs.list_jobs(&h.admin(), None, None) {
        h.platform.jobs.wait(&j.job_id, std::time::Duration::from_secs(10)).await.unwrap();
    }
    let s = call(&app, "GET", "/api/system/status", Some(ADMIN_TOKEN), None).await.body;
    let docs = h.platform.store.list("jobs").unwrap();
    let stored = |status: &str| docs.iter().filter(|d| d.body["status"] == status).count() as u64;
    assert_eq!(s["jobs"]["total"].as_u64(), Some(docs.len() as u64));
    assert_eq!(s["jobs"]["done"].as_u64(), Some(stored("DONE")));
    assert_eq!(s["jobs"]["queued"].as_u64(), Some(stored("QUEUED")));
    assert_eq!(docs.len(), 6);
    assert_eq!(s["invocations"]["total"], 7);
    assert_eq!(s["invocations"]["failed"], 1);
    assert_eq!(s["functions"][0]["replicas_warm"], 1);
    assert_eq!(s["users"], 1);
    let internal = s["backends"].as_array().unwrap().iter().find(|b| b["name"] == "internal_simulator").unwrap();
    assert_eq!(internal["queue_length"], 0);
}
