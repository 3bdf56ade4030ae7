//! HTTP gateway: the REST API under `/api` and function endpoints under
//! `/function/{name}`.
//!
//! Access rules live in [`ROUTES`]. A middleware resolves the bearer token
//! and checks the caller's role against the matched route before any
//! handler runs; handlers then apply ownership rules.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{MatchedPath, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Extension, Json, Router};
use qfaas_core::backend::to_cents;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::auth::{Role, User};
use crate::error::{ApiError, Error, Result};
use crate::invoke::InvocationRequest;
use crate::jobs::JobStatus;
use crate::pipeline::FunctionSpec;
use crate::platform::Platform;

/// Machine-readable API description served at `/api/openapi.json`.
pub const OPENAPI: &str = include_str!("../api/openapi.json");

pub const VERSION_HEADER: &str = "x-function-version";

/// One endpoint and the least role allowed to call it; `None` is public.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSpec {
    pub method: &'static str,
    pub path: &'static str,
    pub min_role: Option<Role>,
}

const fn r(method: &'static str, path: &'static str, min_role: Option<Role>) -> RouteSpec {
    RouteSpec { method, path, min_role }
}

const ADMIN: Option<Role> = Some(Role::Administrator);
const ENGINEER: Option<Role> = Some(Role::Engineer);
const ANY: Option<Role> = Some(Role::EndUser);

pub const ROUTES: &[RouteSpec] = &[
    r("GET", "/healthz", None),
    r("GET", "/api/openapi.json", None),
    r("GET", "/api/users", ADMIN),
    r("POST", "/api/users", ADMIN),
    r("GET", "/api/users/me", ANY),
    r("GET", "/api/users/{id}", ADMIN),
    r("DELETE", "/api/users/{id}", ADMIN),
    r("PUT", "/api/users/{id}/role", ADMIN),
    r("POST", "/api/users/{id}/token", ADMIN),
    r("GET", "/api/users/{id}/credentials", ANY),
    r("GET", "/api/functions", ANY),
    r("POST", "/api/functions", ENGINEER),
    r("GET", "/api/functions/{name}", ANY),
    r("PUT", "/api/functions/{name}", ENGINEER),
    r("DELETE", "/api/functions/{name}", ENGINEER),
    r("PUT", "/api/functions/{name}/scale", ENGINEER),
    r("GET", "/api/functions/{name}/logs", ENGINEER),
    r("GET", "/api/functions/{name}/versions", ENGINEER),
    r("GET", "/api/jobs", ANY),
    r("GET", "/api/jobs/{id}", ANY),
    r("DELETE", "/api/jobs/{id}", ANY),
    r("GET", "/api/providers", ANY),
    r("GET", "/api/providers/credentials", ANY),
    r("PUT", "/api/providers/{name}/credential", ANY),
    r("DELETE", "/api/providers/{name}/credential", ANY),
    r("GET", "/api/backends", ANY),
    r("GET", "/api/backends/{name}", ANY),
    r("GET", "/api/backends/{name}/cost", ANY),
    r("PUT", "/api/backends/{name}/operational", ADMIN),
    r("GET", "/api/registry", ENGINEER),
    r("GET", "/api/system/status", ENGINEER),
    r("POST", "/function/{name}", ANY),
];

pub fn route_spec(method: &str, path: &str) -> Option<&'static RouteSpec> {
    ROUTES.iter().find(|r| r.method == method && r.path == path)
}

type AppState = Arc<Platform>;

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        if self.status() >= 500 {
            tracing::error!("{self}");
        }
        api_error_response(self.to_api())
    }
}

fn api_error_response(api: ApiError) -> Response {
    let status = StatusCode::from_u16(api.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(api)).into_response()
}

fn bearer(req: &Request) -> Option<&str> {
    let value = req.headers().get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

async fn authorize(State(p): State<AppState>, mut req: Request, next: Next) -> Response {
    let path = req
        .extensions()
        .get::<MatchedPath>()
        .map(|m| m.as_str().to_owned())
        .unwrap_or_default();
    let Some(spec) = route_spec(req.method().as_str(), &path) else {
        return next.run(req).await;
    };
    if let Some(role) = spec.min_role {
        match p.users.dependency_check(bearer(&req), role) {
            Ok(user) => {
                req.extensions_mut().insert(user);
            }
            Err(e @ Error::PermissionError(_)) => {
                let mut api = e.to_api();
                api.detail = json!({"required_role": role.as_str()});
                return api_error_response(api);
            }
            Err(e) => return e.into_response(),
        }
    }
    next.run(req).await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| Error::BadRequest(format!("invalid request body: {e}")))
}

#[derive(Debug, Deserialize)]
struct Page {
    limit: Option<usize>,
    offset: Option<usize>,
}

const DEFAULT_LIMIT: usize = 100;
const MAX_LIMIT: usize = 1000;

fn paginate<T: serde::Serialize>(items: Vec<T>, limit: Option<usize>, offset: Option<usize>) -> Value {
    let total = items.len();
    let limit = limit.unwrap_or(DEFAULT_LIMIT).min(MAX_LIMIT);
    let offset = offset.unwrap_or(0);
    let page: Vec<T> = items.into_iter().skip(offset).take(limit).collect();
    json!({"items": page, "total": total, "limit": limit, "offset": offset})
}

fn no_content() -> Response {
    StatusCode::NO_CONTENT.into_response()
}

/// Builds the gateway router for `platform`.
pub fn router(platform: Arc<Platform>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/api/openapi.json", get(openapi))
        .route("/api/users", get(list_users).post(create_user))
        .route("/api/users/me", get(me))
        .route("/api/users/{id}", get(get_user).delete(delete_user))
        .route("/api/users/{id}/role", put(set_role))
        .route("/api/users/{id}/token", post(rotate_token))
        .route("/api/users/{id}/credentials", get(user_credentials))
        .route("/api/functions", get(list_functions).post(create_function))
        .route(
            "/api/functions/{name}",
            get(get_function).put(update_function).delete(delete_function),
        )
        .route("/api/functions/{name}/scale", put(scale_function))
        .route("/api/functions/{name}/logs", get(function_logs))
        .route("/api/functions/{name}/versions", get(function_versions))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(get_job).delete(delete_job))
        .route("/api/providers", get(list_providers))
        .route("/api/providers/credentials", get(my_credentials))
        .route(
            "/api/providers/{name}/credential",
            put(put_credential).delete(delete_credential),
        )
        .route("/api/backends", get(list_backends))
        .route("/api/backends/{name}", get(get_backend))
        .route("/api/backends/{name}/cost", get(backend_cost))
        .route("/api/backends/{name}/operational", put(set_operational))
        .route("/api/registry", get(registry))
        .route("/api/system/status", get(system_status))
        .route("/function/{name}", post(invoke))
        .route_layer(middleware::from_fn_with_state(platform.clone(), authorize))
        .fallback(|method: Method, uri: axum::http::Uri| async move {
            Error::NotFound(format!("{method} {}", uri.path())).into_response()
        })
        .method_not_allowed_fallback(|method: Method, uri: axum::http::Uri| async move {
            api_error_response(ApiError {
                status: 405,
                code: "MethodNotAllowed".into(),
                message: format!("{method} is not allowed on {}", uri.path()),
                detail: Value::Null,
            })
        })
        .with_state(platform)
}

/// Serves the gateway on `listener` until `shutdown` resolves.
pub async fn serve(
    platform: Arc<Platform>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(platform))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

// ---- users

#[derive(Deserialize)]
struct NewUser {
    username: String,
    role: String,
    #[serde(default)]
    token: Option<String>,
}

fn role_from(name: &str) -> Result<Role> {
    Role::from_name(name).ok_or_else(|| Error::BadRequest(format!("unknown role `{name}`")))
}

async fn list_users(State(p): State<AppState>, Query(page): Query<Page>) -> Json<Value> {
    Json(paginate(p.users.list(), page.limit, page.offset))
}

async fn create_user(State(p): State<AppState>, body: Bytes) -> Result<Response> {
    let req: NewUser = parse(&body)?;
    let (user, token) = p.users.create(&req.username, role_from(&req.role)?, req.token)?;
    Ok((StatusCode::CREATED, Json(json!({"user": user, "token": token}))).into_response())
}

async fn me(Extension(user): Extension<User>) -> Json<User> {
    Json(user)
}

async fn get_user(State(p): State<AppState>, Path(id): Path<String>) -> Result<Json<User>> {
    Ok(Json(p.users.get(&id)?))
}

async fn delete_user(State(p): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    p.users.delete(&id)?;
    Ok(no_content())
}

#[derive(Deserialize)]
struct RoleChange {
    role: String,
}

async fn set_role(State(p): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<User>> {
    let req: RoleChange = parse(&body)?;
    Ok(Json(p.users.set_role(&id, role_from(&req.role)?)?))
}

async fn rotate_token(State(p): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>> {
    let token = p.users.rotate_token(&id)?;
    Ok(Json(json!({"id": id, "token": token})))
}

async fn user_credentials(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(id): Path<String>,
) -> Result<Json<Value>> {
    if caller.id != id {
        return Err(Error::forbidden("credentials are visible to their owner only"));
    }
    credentials_of(&p, &caller)
}

fn credentials_of(p: &Platform, user: &User) -> Result<Json<Value>> {
    let items: Vec<Value> = p.credentials.list_for(&user.id)?.iter().map(|c| c.masked()).collect();
    Ok(Json(json!({"items": items})))
}

// ---- functions

async fn list_functions(State(p): State<AppState>, Query(page): Query<Page>) -> Result<Json<Value>> {
    Ok(Json(paginate(p.functions.list()?, page.limit, page.offset)))
}

async fn create_function(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    body: Bytes,
) -> Result<Response> {
    let spec: FunctionSpec = parse(&body)?;
    let rec = p.functions.create(&caller, spec).await?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn get_function(State(p): State<AppState>, Path(name): Path<String>) -> Result<Response> {
    Ok(Json(p.functions.get(&name)?).into_response())
}

async fn update_function(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response> {
    let spec: FunctionSpec = parse(&body)?;
    if spec.name.as_deref().is_some_and(|n| n != name) {
        return Err(Error::BadRequest("a function cannot be renamed".into()));
    }
    Ok(Json(p.functions.update(&caller, &name, spec).await?).into_response())
}

async fn delete_function(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
) -> Result<Response> {
    p.functions.delete(&caller, &name).await?;
    Ok(no_content())
}

#[derive(Deserialize)]
struct Scale {
    replicas: u32,
}

async fn scale_function(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response> {
    let req: Scale = parse(&body)?;
    Ok(Json(p.functions.scale(&caller, &name, req.replicas).await?).into_response())
}

async fn function_logs(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
) -> Result<Json<Value>> {
    Ok(Json(json!({"name": name, "items": p.functions.logs(&caller, &name)?})))
}

async fn function_versions(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
) -> Result<Json<Value>> {
    Ok(Json(json!({"name": name, "items": p.functions.versions(&caller, &name)?})))
}

// ---- jobs

#[derive(Deserialize)]
struct JobQuery {
    owner: Option<String>,
    status: Option<String>,
    function: Option<String>,
    limit: Option<usize>,
    offset: Option<usize>,
}

async fn list_jobs(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Query(q): Query<JobQuery>,
) -> Result<Json<Value>> {
    let status = match &q.status {
        Some(s) => Some(
            serde_json::from_value::<JobStatus>(json!(s.to_ascii_uppercase()))
                .map_err(|_| Error::BadRequest(format!("unknown job status `{s}`")))?,
        ),
        None => None,
    };
    let mut jobs = p.jobs.list_jobs(&caller, q.owner.as_deref(), status);
    if let Some(f) = &q.function {
        jobs.retain(|j| j.function.as_deref() == Some(f));
    }
    Ok(Json(paginate(jobs, q.limit, q.offset)))
}

async fn get_job(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(id): Path<String>,
) -> Result<Response> {
    Ok(Json(p.jobs.get_job(&id, &caller)?).into_response())
}

async fn delete_job(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(id): Path<String>,
) -> Result<Response> {
    p.jobs.delete_job(&id, &caller)?;
    Ok(no_content())
}

// ---- providers

async fn list_providers(State(p): State<AppState>, Extension(caller): Extension<User>) -> Result<Json<Value>> {
    let mut items = Vec::new();
    for info in p.catalog.providers() {
        let registered = p.credentials.provider_token(&caller, &info.name)?.is_some();
        let mut v = json!(info);
        v["needs_credential"] = json!(info.kind.needs_credential());
        v["credential_registered"] = json!(registered);
        items.push(v);
    }
    Ok(Json(json!({"items": items})))
}

async fn my_credentials(State(p): State<AppState>, Extension(caller): Extension<User>) -> Result<Json<Value>> {
    credentials_of(&p, &caller)
}

#[derive(Deserialize)]
struct CredentialBody {
    #[serde(alias = "token", alias = "api_token", alias = "apiToken")]
    credential: String,
}

fn provider_for_credential(p: &Platform, name: &str) -> Result<()> {
    let info = p
        .catalog
        .providers()
        .into_iter()
        .find(|i| i.name == name)
        .ok_or_else(|| Error::ProviderNotFound(name.to_owned()))?;
    if !info.kind.needs_credential() {
        return Err(Error::BadRequest(format!("provider `{name}` needs no credential")));
    }
    Ok(())
}

async fn put_credential(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Json<Value>> {
    provider_for_credential(&p, &name)?;
    let req: CredentialBody = parse(&body)?;
    Ok(Json(p.credentials.register(&caller, &name, &req.credential)?.masked()))
}

async fn delete_credential(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
) -> Result<Response> {
    provider_for_credential(&p, &name)?;
    p.credentials.remove(&caller, &name)?;
    Ok(no_content())
}

// ---- backends

#[derive(Deserialize)]
struct BackendQuery {
    provider: Option<String>,
    #[serde(rename = "type")]
    backend_type: Option<String>,
}

async fn list_backends(State(p): State<AppState>, Query(q): Query<BackendQuery>) -> Json<Value> {
    let items: Vec<_> = p
        .jobs
        .backends()
        .into_iter()
        .filter(|b| q.provider.as_ref().is_none_or(|x| &b.provider == x))
        .filter(|b| q.backend_type.as_ref().is_none_or(|t| b.backend_type.as_str() == t))
        .collect();
    Json(json!({"items": items}))
}

async fn get_backend(State(p): State<AppState>, Path(name): Path<String>) -> Result<Response> {
    Ok(Json(p.jobs.backend(&name)?).into_response())
}

#[derive(Deserialize)]
struct CostQuery {
    tasks: Option<String>,
    shots: Option<String>,
}

fn count_param(name: &str, v: Option<&str>, default: u64) -> Result<u64> {
    match v {
        None => Ok(default),
        Some(s) => u64::from_str(s).map_err(|_| Error::BadRequest(format!("`{name}` must be a non-negative integer"))),
    }
}

async fn backend_cost(
    State(p): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<CostQuery>,
) -> Result<Json<Value>> {
    let b = p.jobs.backend(&name)?;
    let tasks = count_param("tasks", q.tasks.as_deref(), 1)?;
    let shots = count_param("shots", q.shots.as_deref(), 1000)?;
    let cost = b.pricing.estimate(tasks, shots);
    Ok(Json(json!({
        "backend": b.name,
        "tasks": tasks,
        "shots": shots,
        "cost": cost.normalize().to_string(),
        "cost_cents": to_cents(cost).to_string(),
        "currency": "USD",
    })))
}

#[derive(Deserialize)]
struct Operational {
    operational: bool,
}

async fn set_operational(State(p): State<AppState>, Path(name): Path<String>, body: Bytes) -> Result<Response> {
    let req: Operational = parse(&body)?;
    p.jobs.set_operational(&name, req.operational)?;
    Ok(Json(p.jobs.backend(&name)?).into_response())
}

async fn registry(State(p): State<AppState>) -> Result<Json<Value>> {
    Ok(Json(json!({"items": p.functions.registry().entries()?})))
}

// ---- monitoring

/// Monitoring snapshot: functions, invocation totals, jobs, backends.
pub fn status_snapshot(p: &Platform) -> Result<Value> {
    let published: BTreeMap<String, _> = p.functions.published().into_iter().collect();
    let mut functions = Vec::new();
    let (mut invocations, mut failures) = (0u64, 0u64);
    for rec in p.functions.list()? {
        let mut v = json!({
            "name": rec.name,
            "status": rec.status,
            "version": rec.version,
            "replicas_desired": rec.replicas,
            "replicas_warm": 0,
            "in_flight": 0,
            "invocations": 0,
            "failures": 0,
        });
        if let Some(d) = published.get(&rec.name) {
            let pool = d.pool();
            let inv = d.invocations.load(std::sync::atomic::Ordering::Relaxed);
            let fail = d.failures.load(std::sync::atomic::Ordering::Relaxed);
            invocations += inv;
            failures += fail;
            v["replicas_warm"] = json!(pool.warm());
            v["in_flight"] = json!(pool.in_flight());
            v["invocations"] = json!(inv);
            v["failures"] = json!(fail);
        }
        functions.push(v);
    }
    let backends: Vec<Value> = p
        .jobs
        .backends()
        .into_iter()
        .map(|b| {
            json!({
                "name": b.name,
                "provider": b.provider,
                "type": b.backend_type,
                "operational": b.operational,
                "queue_length": b.queue_length,
            })
        })
        .collect();
    let t = p.jobs.totals();
    Ok(json!({
        "uptime_seconds": p.started.elapsed().as_secs_f64(),
        "functions": functions,
        "invocations": {"total": invocations, "failed": failures},
        "jobs": {"total": t.total, "queued": t.queued, "running": t.running, "done": t.done, "error": t.error},
        "backends": backends,
        "users": p.users.list().len(),
    }))
}

async fn system_status(State(p): State<AppState>) -> Result<Json<Value>> {
    Ok(Json(status_snapshot(&p)?))
}

// ---- function endpoints

async fn invoke(
    State(p): State<AppState>,
    Extension(caller): Extension<User>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response> {
    let req: InvocationRequest = parse(&body)?;
    let out = p.invoke(&caller, &name, req).await?;
    let status = StatusCode::from_u16(out.status).unwrap_or(StatusCode::OK);
    let mut resp = (status, Json(out.body)).into_response();
    resp.headers_mut()
        .insert(VERSION_HEADER, HeaderValue::from(out.version));
    Ok(resp)
}
