//! Function invocation: route to a replica, pre-process, instantiate,
//! select a backend, submit, and optionally wait for the result.

use std::sync::atomic::Ordering;

use qfaas_core::backend::{backend_selection, BackendPreference, BackendType};
use qfaas_core::ir;
use qfaas_core::plugins::PostContext;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::auth::User;
use crate::catalog::ProviderKind;
use crate::error::{Error, Result};
use crate::jobs::{Job, JobRequest, JobStatus};
use crate::platform::Platform;

pub const DEFAULT_SHOTS: u64 = 1024;

/// A backend type filter: one type name or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TypeFilter {
    One(String),
    Many(Vec<String>),
}

impl TypeFilter {
    fn resolve(&self) -> Result<Vec<BackendType>> {
        let names = match self {
            TypeFilter::One(s) => vec![s.clone()],
            TypeFilter::Many(v) => v.clone(),
        };
        names
            .iter()
            .map(|n| BackendType::from_name(n).ok_or_else(|| Error::BadRequest(format!("unknown backend type `{n}`"))))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BackendInfo {
    #[serde(default)]
    pub autoselect: bool,
    #[serde(default, rename = "type")]
    pub backend_type: Option<TypeFilter>,
    #[serde(default, alias = "backend_name", alias = "device")]
    pub backend_name: Option<String>,
    #[serde(default)]
    pub internal: Option<bool>,
    #[serde(default, rename = "api_token", alias = "apiToken")]
    pub api_token: Option<String>,
    #[serde(default)]
    pub hub: Option<String>,
}

/// Invocation body. Both the camelCase and snake_case spellings of the
/// multi-word fields are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InvocationRequest {
    #[serde(default)]
    pub input: i64,
    #[serde(default = "default_provider")]
    pub provider: String,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default, alias = "wait_for_result")]
    pub wait_for_result: bool,
    #[serde(default, alias = "backend_info")]
    pub backend_info: BackendInfo,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_provider() -> String {
    "internal".into()
}

fn default_shots() -> u64 {
    DEFAULT_SHOTS
}

impl Default for InvocationRequest {
    fn default() -> Self {
        InvocationRequest {
            input: 0,
            provider: default_provider(),
            shots: DEFAULT_SHOTS,
            wait_for_result: false,
            backend_info: BackendInfo::default(),
            seed: None,
        }
    }
}

/// Response plus the HTTP status and the function version that served it.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub status: u16,
    pub body: Value,
    pub version: u64,
}

impl InvocationRequest {
    fn preference(&self, max_shots: u64) -> Result<BackendPreference> {
        if self.shots == 0 || self.shots > max_shots {
            return Err(Error::BadRequest(format!("shots must be in 1..={max_shots}")));
        }
        let info = &self.backend_info;
        let internal = info.internal.unwrap_or(self.provider == "internal");
        let types = info.backend_type.as_ref().map(TypeFilter::resolve).transpose()?;
        if !internal {
            if info.autoselect && types.is_none() {
                return Err(Error::BadRequest("backendInfo.type is required when autoselect is true".into()));
            }
            if !info.autoselect && info.backend_name.is_none() {
                return Err(Error::BadRequest(
                    "backendInfo.backendName is required when autoselect is false".into(),
                ));
            }
        }
        Ok(BackendPreference {
            internal,
            autoselect: info.autoselect,
            types,
            backend_name: info.backend_name.clone(),
        })
    }
}

fn failure_error(job: &Job, code: &str, message: &str) -> Error {
    match code {
        "NoPeriodFound" => Error::NoPeriodFound,
        "InvalidN" => Error::InvalidN(message.to_owned()),
        "NotCoprime" => Error::NotCoprime(message.to_owned()),
        _ => Error::JobExecutionError {
            job_id: job.job_id.clone(),
            message: message.to_owned(),
        },
    }
}

/// Response body for a finished job.
pub fn result_body(job: &Job) -> Result<Value> {
    if job.status == JobStatus::Error {
        let (code, message) = job
            .error
            .as_ref()
            .map(|e| (e.code.as_str(), e.message.as_str()))
            .unwrap_or(("JobExecutionError", "job failed"));
        return Err(Error::JobExecutionError {
            job_id: job.job_id.clone(),
            message: format!("{code}: {message}"),
        });
    }
    if let Some(e) = &job.error {
        return Err(failure_error(job, &e.code, &e.message));
    }
    let mut detail = Map::new();
    detail.insert("provider_info".into(), job.provider_info());
    if let Some(extra) = &job.detail {
        for (k, v) in extra {
            detail.insert(k.clone(), v.clone());
        }
    }
    Ok(json!({
        "result": job.result.clone().unwrap_or(Value::Null),
        "backend_device": job.backend,
        "detail": detail,
    }))
}

impl Platform {
    /// Invokes the published function `name` on behalf of `caller`.
    pub async fn invoke(&self, caller: &User, name: &str, req: InvocationRequest) -> Result<Invocation> {
        let (deployed, ticket) = self.functions.route(name)?;
        deployed.invocations.fetch_add(1, Ordering::Relaxed);
        let out = self.invoke_on(caller, ticket, req).await;
        if out.is_err() {
            deployed.failures.fetch_add(1, Ordering::Relaxed);
        }
        out
    }

    async fn invoke_on(
        &self,
        caller: &User,
        ticket: crate::replicas::Ticket<crate::pipeline::FunctionBuild>,
        req: InvocationRequest,
    ) -> Result<Invocation> {
        let providers = self.catalog.providers();
        let provider = providers
            .iter()
            .find(|p| p.name == req.provider)
            .ok_or_else(|| Error::ProviderNotFound(req.provider.clone()))?;
        let pref = req.preference(self.config.max_shots)?;

        let lease = ticket.acquire().await;
        let build = lease.build().clone();
        let overhead = self.config.replica_overhead();
        if !overhead.is_zero() {
            tokio::time::sleep(overhead).await;
        }

        let input = build.pre.apply(req.input, self.config.max_qubits);
        let instance = ir::instantiate(&build.template, input, self.config.max_qubits)?;
        let required = instance.circuit.num_qubits;

        if !pref.internal && provider.kind.needs_credential() {
            let token = match req.backend_info.api_token.as_deref().filter(|t| !t.is_empty()) {
                Some(t) => Some(t.to_owned()),
                None => self.credentials.provider_token(caller, &provider.name)?,
            };
            if token.is_none() {
                return Err(Error::ProviderAuthError(provider.name.clone()));
            }
        }

        let all = self.jobs.backends();
        let (internal, external): (Vec<_>, Vec<_>) = all
            .into_iter()
            .partition(|b| ProviderKind::for_provider(&b.provider) == ProviderKind::Internal);
        let provider_backends: Vec<_> = external.into_iter().filter(|b| b.provider == provider.name).collect();
        let backend = backend_selection(required, &pref, &internal, &provider_backends)?.name.clone();

        let jobs = self.jobs.clone();
        let request = JobRequest {
            owner: caller.id.clone(),
            function: Some(build.name.clone()),
            function_version: Some(build.version),
            circuit: instance.circuit,
            backend: backend.clone(),
            shots: req.shots,
            seed: req.seed,
            post: build.post,
            context: PostContext {
                input,
                required_qubits: required,
                shor: instance.shor,
            },
        };
        // submission persists the job; keep the fsync off the runtime threads
        let job = tokio::task::spawn_blocking(move || jobs.submit(request))
            .await
            .map_err(|e| Error::Internal(format!("job submission task failed: {e}")))??;

        if !req.wait_for_result {
            return Ok(Invocation {
                status: 202,
                body: json!({"job_id": job.job_id, "backend_device": backend}),
                version: build.version,
            });
        }
        let job = self.jobs.wait(&job.job_id, self.config.wait_timeout()).await?;
        drop(lease);
        if !job.status.is_terminal() {
            return Ok(Invocation {
                status: 202,
                body: json!({"job_id": job.job_id, "backend_device": backend, "job_status": job.status.as_str()}),
                version: build.version,
            });
        }
        Ok(Invocation {
            status: 200,
            body: result_body(&job)?,
            version: build.version,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_spellings_parse() {
        let camel: InvocationRequest = serde_json::from_value(json!({
            "input": 15, "provider": "ibmq", "shots": 100, "waitForResult": true,
            "backendInfo": {"autoselect": false, "backendName": "ibm_cairo"}
        }))
        .unwrap();
        let snake: InvocationRequest = serde_json::from_value(json!({
            "input": 15, "provider": "ibmq", "shots": 100, "wait_for_result": true,
            "backend_info": {"hub": "ibm-q-melbourne", "api_token": "", "device": "ibm_cairo", "autoselect": false}
        }))
        .unwrap();
        assert_eq!(camel.backend_info.backend_name, snake.backend_info.backend_name);
        assert!(camel.wait_for_result && snake.wait_for_result);
    }

    #[test]
    fn defaults_and_validation() {
        let r: InvocationRequest = serde_json::from_value(json!({})).unwrap();
        assert_eq!((r.input, r.shots, r.provider.as_str()), (0, 1024, "internal"));
        assert!(r.preference(1_000_000).unwrap().internal);

        let auto_without_type: InvocationRequest =
            serde_json::from_value(json!({"provider": "braket", "backendInfo": {"autoselect": true}})).unwrap();
        assert!(matches!(auto_without_type.preference(10), Err(Error::BadRequest(_))));

        let typed: InvocationRequest = serde_json::from_value(
            json!({"provider": "braket", "backendInfo": {"autoselect": true, "type": ["qpu", "simulator"]}}),
        )
        .unwrap();
        let p = typed.preference(10_000).unwrap();
        assert_eq!(p.types.unwrap().len(), 2);

        let zero: InvocationRequest = serde_json::from_value(json!({"shots": 0})).unwrap();
        assert!(zero.preference(10).is_err());
    }
}
