//! Sweep of every gateway route under every role, with fixtures chosen so
//! that ownership rules never interfere: only the role gate decides.

use axum::Router;
use qfaas::auth::Role;
use qfaas::gateway::{RouteSpec, ROUTES};
use serde_json::{json, Value};

use super::{call, qrng_spec, Harness, Reply, ADMIN_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Caller {
    Anonymous,
    Garbage,
    As(Role),
}

impl Caller {
    pub const ALL: [Caller; 5] = [
        Caller::Anonymous,
        Caller::Garbage,
        Caller::As(Role::EndUser),
        Caller::As(Role::Engineer),
        Caller::As(Role::Administrator),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Caller::Anonymous => "anonymous",
            Caller::Garbage => "bad-token",
            Caller::As(r) => r.as_str(),
        }
    }
}

/// What the documented table says should happen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Allowed,
    Unauthenticated,
    Forbidden,
}

pub fn expected(route: &RouteSpec, caller: Caller) -> Expect {
    match (route.min_role, caller) {
        (None, _) => Expect::Allowed,
        (Some(_), Caller::Anonymous | Caller::Garbage) => Expect::Unauthenticated,
        (Some(min), Caller::As(r)) if r >= min => Expect::Allowed,
        _ => Expect::Forbidden,
    }
}

pub fn observed(reply: &Reply) -> Option<Expect> {
    let s = reply.status.as_u16();
    if reply.status.is_success() {
        Some(Expect::Allowed)
    } else if s == 401 && reply.body["code"] == "InvalidToken" {
        Some(Expect::Unauthenticated)
    } else if s == 403 && reply.body["detail"]["required_role"].is_string() {
        Some(Expect::Forbidden)
    } else {
        None
    }
}

pub struct Deviation {
    pub method: &'static str,
    pub path: &'static str,
    pub caller: &'static str,
    pub expected: Expect,
    pub status: u16,
    pub body: Value,
}

struct Fixtures {
    tokens: Vec<(Role, String, String)>,
    counter: usize,
}

impl Fixtures {
    fn token(&self, role: Role) -> (&str, &str) {
        let (_, id, t) = self.tokens.iter().find(|(r, _, _)| *r == role).unwrap();
        (id, t)
    }
}

async fn fresh_function(app: &Router, token: &str, name: &str) {
    let r = call(app, "POST", "/api/functions", Some(token), Some(&qrng_spec(name))).await;
    assert!(r.status.is_success(), "fixture function: {:?}", r.body);
}

async fn fresh_job(app: &Router, token: &str) -> String {
    let r = call(app, "POST", "/function/fixture", Some(token), Some(&json!({"input": 2, "waitForResult": true}))).await;
    assert!(r.status.is_success(), "fixture job: {:?}", r.body);
    r.body["detail"]["provider_info"]["job_id"].as_str().unwrap().to_owned()
}

/// Runs the full (route × caller) sweep and returns every deviation from
/// the table, plus the number of cells checked.
pub async fn sweep(h: &Harness) -> (Vec<Deviation>, usize) {
    let app = h.router();
    let admin_id = h.admin().id;
    let mut fx = Fixtures {
        tokens: vec![(Role::Administrator, admin_id, ADMIN_TOKEN.to_owned())],
        counter: 0,
    };
    for (role, name) in [(Role::Engineer, "m-eng"), (Role::EndUser, "m-end")] {
        let (u, t) = h.user(name, role);
        fx.tokens.push((role, u.id, t));
    }
    fresh_function(&app, ADMIN_TOKEN, "fixture").await;

    let mut deviations = Vec::new();
    let mut cells = 0;
    for route in ROUTES {
        for caller in Caller::ALL {
            cells += 1;
            fx.counter += 1;
            let n = fx.counter;
            let token: Option<String> = match caller {
                Caller::Anonymous => None,
                Caller::Garbage => Some(format!("not-a-real-token-{n}")),
                Caller::As(r) => Some(fx.token(r).1.to_owned()),
            };
            let allowed = expected(route, caller) == Expect::Allowed;
            // the caller's own identity, for routes with ownership rules
            let own = match caller {
                Caller::As(r) => Some(fx.token(r)),
                _ => None,
            };
            let mut path = route.path.to_owned();
            let mut body = None;
            match (route.method, route.path) {
                ("POST", "/api/users") => body = Some(json!({"username": format!("new-{n}"), "role": "end_user"})),
                (_, "/api/users/{id}") | ("PUT", "/api/users/{id}/role") | ("POST", "/api/users/{id}/token") => {
                    let (victim, _) = h.user(&format!("victim-{n}"), Role::EndUser);
                    path = path.replace("{id}", &victim.id);
                    if route.method == "PUT" {
                        body = Some(json!({"role": "engineer"}));
                    }
                }
                (_, "/api/users/{id}/credentials") => {
                    path = path.replace("{id}", own.map_or("usr_x", |o| o.0));
                }
                ("POST", "/api/functions") => body = Some(qrng_spec(&format!("f-{n}"))),
                (_, p) if p.starts_with("/api/functions/{name}") => {
                    let name = format!("g-{n}");
                    if allowed && route.min_role == Some(Role::Engineer) {
                        fresh_function(&app, own.unwrap().1, &name).await;
                    } else if allowed {
                        fresh_function(&app, ADMIN_TOKEN, &name).await;
                    }
                    path = path.replace("{name}", &name);
                    body = match route.method {
                        "PUT" if p.ends_with("/scale") => Some(json!({"replicas": 2})),
                        "PUT" => Some(json!({"postProcessor": "raw_counts"})),
                        _ => None,
                    };
                }
                (_, "/api/jobs/{id}") => {
                    let id = match own {
                        Some((_, t)) => fresh_job(&app, t).await,
                        None => "000000000000000000000000".to_owned(),
                    };
                    path = path.replace("{id}", &id);
                }
                (_, "/api/providers/{name}/credential") => {
                    path = path.replace("{name}", "ibmq");
                    if route.method == "PUT" {
                        body = Some(json!({"credential": "secret-value"}));
                    }
                }
                (_, p) if p.starts_with("/api/backends/{name}") => {
                    path = path.replace("{name}", "internal_simulator");
                    if route.method == "PUT" {
                        body = Some(json!({"operational": true}));
                    }
                }
                ("POST", "/function/{name}") => {
                    path = path.replace("{name}", "fixture");
                    body = Some(json!({"input": 2, "shots": 16, "waitForResult": true}));
                }
                _ => {}
            }
            let reply = call(&app, route.method, &path, token.as_deref(), body.as_ref()).await;
            let want = expected(route, caller);
            if observed(&reply) != Some(want) {
                deviations.push(Deviation {
                    method: route.method,
                    path: route.path,
                    caller: caller.label(),
                    expected: want,
                    status: reply.status.as_u16(),
                    body: reply.body,
                });
            }
        }
    }
    (deviations, cells)
}
