//! Function deployment: validate, package, commit, build, register,
//! deploy and publish; plus update, delete and scale.
//!
//! Runs are serialized per function name. A published function owns one
//! replica pool bound to its current build; an update warms a pool for the
//! new build, swaps it in, then drains the old one.

use std::collections::BTreeMap;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;
use std::time::Duration;

use dashmap::DashMap;
use parking_lot::RwLock;
use qfaas_core::ir::{self, CircuitTemplate, Dialect, IrError, TemplateKind};
use qfaas_core::naming::fn_name_check;
use qfaas_core::plugins::{PostProcessor, PreProcessor};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex as AsyncMutex;

use crate::auth::{Role, User};
use crate::error::{Error, Result};
use crate::package::{self, Manifest, Registry};
use crate::replicas::{ReplicaPool, Ticket};
use crate::store::{DocStore, StorageError};
use crate::util;

const FUNCTIONS: &str = "functions";
const VERSIONS: &str = "function_versions";
const LOGS: &str = "deploy_logs";
const MAX_LOG_ENTRIES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FunctionStatus {
    Building,
    Deployed,
    Failed,
    Deleting,
}

/// Request body for create and update. On update, absent fields keep
/// their current values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default, alias = "dialect", alias = "dialect_tag")]
    pub dialect_tag: Option<String>,
    #[serde(default)]
    pub kind: Option<TemplateKind>,
    #[serde(default, alias = "declared_params", alias = "params")]
    pub declared_params: Option<Vec<String>>,
    #[serde(default, alias = "pre_processor", alias = "pre")]
    pub pre_processor: Option<String>,
    #[serde(default, alias = "post_processor", alias = "post")]
    pub post_processor: Option<String>,
    #[serde(default)]
    pub config: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub replicas: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub name: String,
    pub author: String,
    pub dialect_tag: Dialect,
    pub kind: Option<TemplateKind>,
    pub declared_params: Vec<String>,
    pub source: String,
    pub pre_processor: String,
    pub post_processor: String,
    pub config: BTreeMap<String, String>,
    pub image_digest: Option<String>,
    pub replicas: u32,
    pub endpoint: String,
    pub status: FunctionStatus,
    /// Deployed version; 0 until the first successful build.
    pub version: u64,
    /// Latest commit in the function store, successful or not.
    pub commit: u64,
    pub created_at: String,
    pub updated_at: String,
    pub last_error: Option<Value>,
}

impl FunctionRecord {
    fn manifest(&self) -> Manifest {
        Manifest {
            name: self.name.clone(),
            dialect_tag: self.dialect_tag,
            kind: self.kind,
            declared_params: self.declared_params.clone(),
            pre_processor: self.pre_processor.clone(),
            post_processor: self.post_processor.clone(),
            config: self.config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: String,
    pub stage: String,
    pub level: String,
    pub message: String,
}

/// A built function: what a replica executes.
#[derive(Debug)]
pub struct FunctionBuild {
    pub name: String,
    pub version: u64,
    pub image_digest: String,
    pub template: CircuitTemplate,
    pub pre: PreProcessor,
    pub post: PostProcessor,
    pub config: BTreeMap<String, String>,
}

pub type Pool = ReplicaPool<FunctionBuild>;

/// A published endpoint.
pub struct Deployed {
    pool: RwLock<Arc<Pool>>,
    pub invocations: AtomicU64,
    pub failures: AtomicU64,
}

impl Deployed {
    pub fn pool(&self) -> Arc<Pool> {
        self.pool.read().clone()
    }
}

struct BuildFailure {
    message: String,
    detail: Value,
}

fn ir_failure(e: &IrError) -> BuildFailure {
    let (code, line, column) = match e {
        IrError::Syntax { line, column, .. } => ("SyntaxError", Some(*line), Some(*column)),
        IrError::UnknownGate { line, column, .. } => ("UnknownGate", Some(*line), Some(*column)),
        IrError::UndeclaredParameter { line, column, .. } => ("UndeclaredParameter", Some(*line), Some(*column)),
        IrError::UnusedParameter(_) => ("UnusedParameter", None, None),
        IrError::SourceTooLarge(_) => ("SourceTooLarge", None, None),
        IrError::KindMismatch { .. } => ("KindMismatch", None, None),
        IrError::InputOutOfRange(_) => ("InputOutOfRange", None, None),
        IrError::QubitLimitExceeded { .. } => ("QubitLimitExceeded", None, None),
        IrError::Shor(_) => ("InvalidN", None, None),
        IrError::Circuit(_) => ("InvalidCircuit", None, None),
    };
    BuildFailure {
        message: e.to_string(),
        detail: json!({"stage": "build", "error": code, "line": line, "column": column, "message": e.to_string()}),
    }
}

/// Parses the template and resolves the processing plugins.
fn compile(
    manifest: &Manifest,
    source: &str,
    version: u64,
    digest: &str,
    max_qubits: usize,
) -> std::result::Result<FunctionBuild, BuildFailure> {
    let template = ir::parse_template(source, manifest.dialect_tag, manifest.kind, &manifest.declared_params)
        .map_err(|e| ir_failure(&e))?;
    let plugin = |e: qfaas_core::plugins::PluginError| BuildFailure {
        message: e.to_string(),
        detail: json!({"stage": "build", "error": "UnknownPlugin", "message": e.to_string()}),
    };
    let pre = PreProcessor::from_name(&manifest.pre_processor).map_err(plugin)?;
    let post = PostProcessor::from_name(&manifest.post_processor).map_err(plugin)?;
    if post == PostProcessor::ShorFactors && template.kind != TemplateKind::BuiltinShor {
        let message = "post-processor shor_factors needs a `builtin shor` template".to_owned();
        return Err(BuildFailure {
            detail: json!({"stage": "build", "error": "ProcessorMismatch", "message": message}),
            message,
        });
    }
    if template.kind == TemplateKind::Static {
        // no input involved, so any error here would hit every invocation
        ir::instantiate(&template, 0, max_qubits).map_err(|e| ir_failure(&e))?;
    }
    Ok(FunctionBuild {
        name: manifest.name.clone(),
        version,
        image_digest: digest.to_owned(),
        template,
        pre,
        post,
        config: manifest.config.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub max_qubits: usize,
    pub max_replicas: u32,
    pub cold_start: Duration,
}

pub struct Pipeline {
    store: Arc<DocStore>,
    registry: Registry,
    settings: PipelineSettings,
    routes: DashMap<String, Arc<Deployed>>,
    locks: DashMap<String, Arc<AsyncMutex<()>>>,
}

impl Pipeline {
    /// Opens the pipeline and republishes every function that was deployed
    /// when the previous process stopped.
    pub fn start(store: Arc<DocStore>, registry: Registry, settings: PipelineSettings) -> Result<Self> {
        let p = Pipeline {
            store,
            registry,
            settings,
            routes: DashMap::new(),
            locks: DashMap::new(),
        };
        for doc in p.store.list(FUNCTIONS)? {
            let mut rec: FunctionRecord = serde_json::from_value(doc.body).map_err(StorageError::from)?;
            match rec.status {
                FunctionStatus::Deployed => {
                    let digest = rec.image_digest.clone().unwrap_or_default();
                    match compile(&rec.manifest(), &rec.source, rec.version, &digest, p.settings.max_qubits) {
                        Ok(build) => {
                            let pool = Pool::new(Arc::new(build), p.settings.cold_start);
                            pool.prefill(rec.replicas as usize);
                            p.publish(&rec.name, pool);
                        }
                        Err(f) => {
                            rec.status = FunctionStatus::Failed;
                            rec.last_error = Some(f.detail);
                            p.store.put_typed(FUNCTIONS, &rec.name, &rec)?;
                        }
                    }
                }
                FunctionStatus::Building => {
                    rec.status = FunctionStatus::Failed;
                    rec.last_error = Some(json!({"stage": "build", "error": "Interrupted",
                        "message": "server stopped during the build"}));
                    p.store.put_typed(FUNCTIONS, &rec.name, &rec)?;
                }
                FunctionStatus::Deleting => {
                    p.store.delete(FUNCTIONS, &rec.name)?;
                    p.store.delete(LOGS, &rec.name)?;
                }
                FunctionStatus::Failed => {}
            }
        }
        Ok(p)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    fn lock_for(&self, name: &str) -> Arc<AsyncMutex<()>> {
        self.locks.entry(name.to_owned()).or_default().clone()
    }

    fn publish(&self, name: &str, pool: Arc<Pool>) {
        self.routes.insert(
            name.to_owned(),
            Arc::new(Deployed {
                pool: RwLock::new(pool),
                invocations: AtomicU64::new(0),
                failures: AtomicU64::new(0),
            }),
        );
    }

    fn log(&self, name: &str, stage: &str, level: &str, message: impl Into<String>) {
        let entry = LogEntry {
            time: util::format_ts(&util::now_ms()),
            stage: stage.to_owned(),
            level: level.to_owned(),
            message: message.into(),
        };
        let mut entries: Vec<LogEntry> = match self.store.get(LOGS, name) {
            Ok(d) => serde_json::from_value(d.body["entries"].clone()).unwrap_or_default(),
            Err(_) => Vec::new(),
        };
        entries.push(entry);
        if entries.len() > MAX_LOG_ENTRIES {
            entries.drain(..entries.len() - MAX_LOG_ENTRIES);
        }
        if let Err(e) = self.store.put(LOGS, name, &json!({"name": name, "entries": entries})) {
            tracing::warn!(function = name, "writing deployment log failed: {e}");
        }
    }

    fn save(&self, rec: &FunctionRecord) -> Result<()> {
        self.store.put_typed(FUNCTIONS, &rec.name, rec)?;
        Ok(())
    }

    fn load(&self, name: &str) -> Result<Option<FunctionRecord>> {
        match self.store.get_typed::<FunctionRecord>(FUNCTIONS, name) {
            Ok(r) => Ok(Some(r)),
            Err(StorageError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Appends a commit to the function store and returns its number.
    fn commit(&self, name: &str, author: &str, manifest: &Manifest, source: &str, digest: &str) -> Result<u64> {
        let last = self
            .store
            .query(VERSIONS, &[("name", json!(name))])?
            .iter()
            .filter_map(|d| d.body["commit"].as_u64())
            .max()
            .unwrap_or(0);
        let commit = last + 1;
        let body = json!({
            "name": name,
            "commit": commit,
            "author": author,
            "manifest": manifest,
            "source": source,
            "package_digest": digest,
            "committed_at": util::format_ts(&util::now_ms()),
        });
        self.store.put(VERSIONS, &format!("{name}@{commit:06}"), &body)?;
        Ok(commit)
    }

    fn require_engineer(caller: &User) -> Result<()> {
        if caller.role < Role::Engineer {
            return Err(Error::forbidden("only engineers and administrators manage functions"));
        }
        Ok(())
    }

    fn require_author(caller: &User, rec: &FunctionRecord) -> Result<()> {
        Self::require_engineer(caller)?;
        if !caller.may_access(&rec.author) {
            return Err(Error::forbidden(format!(
                "function `{}` belongs to another engineer",
                rec.name
            )));
        }
        Ok(())
    }

    fn check_replicas(&self, n: u32) -> Result<()> {
        if n > self.settings.max_replicas {
            return Err(Error::LimitExceeded(format!(
                "{n} replicas exceeds the limit of {}",
                self.settings.max_replicas
            )));
        }
        Ok(())
    }

    /// Deploys a new function and returns its record.
    pub async fn create(&self, caller: &User, spec: FunctionSpec) -> Result<FunctionRecord> {
        Self::require_engineer(caller)?;
        let name = spec
            .name
            .clone()
            .ok_or_else(|| Error::BadRequest("`name` is required".into()))?;
        if !fn_name_check(&name) {
            return Err(Error::FunctionNameError(name));
        }
        let source = spec
            .source
            .clone()
            .ok_or_else(|| Error::BadRequest("`source` is required".into()))?;
        let dialect_name = spec
            .dialect_tag
            .clone()
            .ok_or_else(|| Error::BadRequest("`dialectTag` is required".into()))?;
        let dialect = Dialect::from_name(&dialect_name)
            .ok_or_else(|| Error::BadRequest(format!("unknown dialect `{dialect_name}`")))?;
        let replicas = spec.replicas.unwrap_or(1);
        self.check_replicas(replicas)?;

        let lock = self.lock_for(&name);
        let _serial = lock.lock().await;
        if let Some(existing) = self.load(&name)? {
            if existing.status != FunctionStatus::Failed || self.routes.contains_key(&name) {
                return Err(Error::FunctionExists(name));
            }
        }

        self.log(&name, "template", "info", format!("skeleton for dialect {dialect_name}"));
        let mut manifest = package::skeleton(&name, dialect);
        manifest.kind = spec.kind;
        manifest.declared_params = spec.declared_params.clone().unwrap_or_default();
        if let Some(p) = &spec.pre_processor {
            manifest.pre_processor = p.clone();
        }
        if let Some(p) = &spec.post_processor {
            manifest.post_processor = p.clone();
        }
        if let Some(c) = &spec.config {
            manifest.config.extend(c.clone());
        }

        let now = util::format_ts(&util::now_ms());
        let mut rec = FunctionRecord {
            name: name.clone(),
            author: caller.id.clone(),
            dialect_tag: dialect,
            kind: manifest.kind,
            declared_params: manifest.declared_params.clone(),
            source: source.clone(),
            pre_processor: manifest.pre_processor.clone(),
            post_processor: manifest.post_processor.clone(),
            config: manifest.config.clone(),
            image_digest: None,
            replicas,
            endpoint: format!("/function/{name}"),
            status: FunctionStatus::Building,
            version: 0,
            commit: 0,
            created_at: now.clone(),
            updated_at: now,
            last_error: None,
        };
        let bytes = package::build_package(&manifest, &source);
        let digest = package::digest(&bytes);
        self.log(&name, "package", "info", format!("package {digest} ({} bytes)", bytes.len()));
        rec.commit = self.commit(&name, &caller.id, &manifest, &source, &digest)?;
        self.log(&name, "commit", "info", format!("commit {}", rec.commit));
        self.save(&rec)?;

        let build = match compile(&manifest, &source, 1, &digest, self.settings.max_qubits) {
            Ok(b) => b,
            Err(f) => {
                self.log(&name, "build", "error", f.message.clone());
                rec.status = FunctionStatus::Failed;
                rec.last_error = Some(f.detail.clone());
                rec.updated_at = util::format_ts(&util::now_ms());
                self.save(&rec)?;
                return Err(Error::BuildError {
                    message: f.message,
                    detail: f.detail,
                });
            }
        };
        self.log(&name, "build", "info", format!("template kind {:?}", build.template.kind));
        self.registry.push(&bytes)?;
        self.log(&name, "registry", "info", format!("pushed {digest}"));

        let pool = Pool::new(Arc::new(build), self.settings.cold_start);
        pool.scale(replicas as usize).await;
        self.log(&name, "deploy", "info", format!("{replicas} replica(s) ready"));
        self.publish(&name, pool);
        self.log(&name, "publish", "info", format!("endpoint {}", rec.endpoint));

        rec.status = FunctionStatus::Deployed;
        rec.version = 1;
        rec.image_digest = Some(digest);
        rec.updated_at = util::format_ts(&util::now_ms());
        self.save(&rec)?;
        Ok(rec)
    }

    /// Builds and rolls out a new version. The old version keeps serving
    /// until the new replicas are warm, and if the build fails.
    pub async fn update(&self, caller: &User, name: &str, spec: FunctionSpec) -> Result<FunctionRecord> {
        Self::require_engineer(caller)?;
        let lock = self.lock_for(name);
        let _serial = lock.lock().await;
        let mut rec = self.load(name)?.ok_or_else(|| Error::FunctionNotFound(name.to_owned()))?;
        Self::require_author(caller, &rec)?;
        if rec.status == FunctionStatus::Deleting {
            return Err(Error::FunctionNotFound(name.to_owned()));
        }

        let mut manifest = rec.manifest();
        if let Some(d) = &spec.dialect_tag {
            manifest.dialect_tag =
                Dialect::from_name(d).ok_or_else(|| Error::BadRequest(format!("unknown dialect `{d}`")))?;
            manifest.config.insert(
                "sdk".into(),
                package::skeleton(name, manifest.dialect_tag).config["sdk"].clone(),
            );
        }
        if spec.kind.is_some() {
            manifest.kind = spec.kind;
        }
        if let Some(p) = &spec.declared_params {
            manifest.declared_params = p.clone();
        }
        if let Some(p) = &spec.pre_processor {
            manifest.pre_processor = p.clone();
        }
        if let Some(p) = &spec.post_processor {
            manifest.post_processor = p.clone();
        }
        if let Some(c) = &spec.config {
            manifest.config.extend(c.clone());
        }
        let source = spec.source.clone().unwrap_or_else(|| rec.source.clone());
        if let Some(r) = spec.replicas {
            self.check_replicas(r)?;
        }

        let bytes = package::build_package(&manifest, &source);
        let digest = package::digest(&bytes);
        let serving = self.routes.get(name).map(|d| d.clone());
        if rec.image_digest.as_deref() == Some(digest.as_str()) && serving.is_some() && spec.replicas.is_none() {
            self.log(name, "package", "info", "package unchanged; nothing to deploy");
            return Ok(rec);
        }
        self.log(name, "package", "info", format!("package {digest} ({} bytes)", bytes.len()));
        rec.commit = self.commit(name, &caller.id, &manifest, &source, &digest)?;
        self.log(name, "commit", "info", format!("commit {}", rec.commit));

        let version = rec.version + 1;
        let build = match compile(&manifest, &source, version, &digest, self.settings.max_qubits) {
            Ok(b) => b,
            Err(f) => {
                self.log(name, "build", "error", f.message.clone());
                rec.last_error = Some(f.detail.clone());
                rec.updated_at = util::format_ts(&util::now_ms());
                self.save(&rec)?;
                return Err(Error::BuildError {
                    message: f.message,
                    detail: f.detail,
                });
            }
        };
        self.log(name, "build", "info", format!("version {version} built"));
        self.registry.push(&bytes)?;
        self.log(name, "registry", "info", format!("pushed {digest}"));

        let replicas = spec.replicas.unwrap_or(rec.replicas);
        let pool = Pool::new(Arc::new(build), self.settings.cold_start);
        pool.scale(replicas as usize).await;
        self.log(name, "deploy", "info", format!("{replicas} replica(s) of version {version} ready"));
        match serving {
            Some(d) => {
                let old = std::mem::replace(&mut *d.pool.write(), pool);
                self.log(name, "publish", "info", format!("switched traffic to version {version}"));
                old.drain().await;
                self.log(name, "deploy", "info", format!("version {} drained", rec.version));
            }
            None => {
                self.publish(name, pool);
                self.log(name, "publish", "info", format!("endpoint {}", rec.endpoint));
            }
        }

        rec.dialect_tag = manifest.dialect_tag;
        rec.kind = manifest.kind;
        rec.declared_params = manifest.declared_params;
        rec.source = source;
        rec.pre_processor = manifest.pre_processor;
        rec.post_processor = manifest.post_processor;
        rec.config = manifest.config;
        rec.image_digest = Some(digest);
        rec.replicas = replicas;
        rec.version = version;
        rec.status = FunctionStatus::Deployed;
        rec.last_error = None;
        rec.updated_at = util::format_ts(&util::now_ms());
        self.save(&rec)?;
        Ok(rec)
    }

    /// Unpublishes the endpoint, drains its replicas and purges the record.
    /// Commits and registry entries are kept.
    pub async fn delete(&self, caller: &User, name: &str) -> Result<()> {
        Self::require_engineer(caller)?;
        let lock = self.lock_for(name);
        let _serial = lock.lock().await;
        let mut rec = self.load(name)?.ok_or_else(|| Error::FunctionNotFound(name.to_owned()))?;
        Self::require_author(caller, &rec)?;
        rec.status = FunctionStatus::Deleting;
        rec.updated_at = util::format_ts(&util::now_ms());
        self.save(&rec)?;
        if let Some((_, d)) = self.routes.remove(name) {
            d.pool().drain().await;
        }
        self.store.delete(FUNCTIONS, name)?;
        self.store.delete(LOGS, name)?;
        Ok(())
    }

    pub async fn scale(&self, caller: &User, name: &str, replicas: u32) -> Result<FunctionRecord> {
        Self::require_engineer(caller)?;
        self.check_replicas(replicas)?;
        let lock = self.lock_for(name);
        let _serial = lock.lock().await;
        let mut rec = self.load(name)?.ok_or_else(|| Error::FunctionNotFound(name.to_owned()))?;
        Self::require_author(caller, &rec)?;
        let deployed = self
            .routes
            .get(name)
            .map(|d| d.clone())
            .ok_or_else(|| Error::FunctionNotFound(name.to_owned()))?;
        deployed.pool().scale(replicas as usize).await;
        self.log(name, "scale", "info", format!("scaled to {replicas} replica(s)"));
        rec.replicas = replicas;
        rec.updated_at = util::format_ts(&util::now_ms());
        self.save(&rec)?;
        Ok(rec)
    }

    pub fn get(&self, name: &str) -> Result<FunctionRecord> {
        self.load(name)?.ok_or_else(|| Error::FunctionNotFound(name.to_owned()))
    }

    pub fn list(&self) -> Result<Vec<FunctionRecord>> {
        self.store
            .list(FUNCTIONS)?
            .into_iter()
            .map(|d| serde_json::from_value(d.body).map_err(|e| StorageError::from(e).into()))
            .collect()
    }

    pub fn logs(&self, caller: &User, name: &str) -> Result<Vec<LogEntry>> {
        let rec = self.get(name)?;
        Self::require_author(caller, &rec)?;
        match self.store.get(LOGS, name) {
            Ok(d) => Ok(serde_json::from_value(d.body["entries"].clone()).map_err(StorageError::from)?),
            Err(StorageError::NotFound { .. }) => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    /// Every commit of the function, oldest first.
    pub fn versions(&self, caller: &User, name: &str) -> Result<Vec<Value>> {
        let rec = self.get(name)?;
        Self::require_author(caller, &rec)?;
        Ok(self
            .store
            .query(VERSIONS, &[("name", json!(name))])?
            .into_iter()
            .map(|d| d.body)
            .collect())
    }

    /// The published endpoint for `name`.
    pub fn deployed(&self, name: &str) -> Result<Arc<Deployed>> {
        self.routes
            .get(name)
            .map(|d| d.clone())
            .ok_or_else(|| Error::FunctionNotFound(name.to_owned()))
    }

    /// Admits a request to the serving pool of `name`.
    pub fn route(&self, name: &str) -> Result<(Arc<Deployed>, Ticket<FunctionBuild>)> {
        let d = self.deployed(name)?;
        let ticket = {
            let pool = d.pool.read();
            pool.admit()
        };
        Ok((d, ticket))
    }

    pub fn published(&self) -> Vec<(String, Arc<Deployed>)> {
        let mut v: Vec<_> = self
            .routes
            .iter()
            .map(|e| (e.key().clone(), e.value().clone()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}
