//! Wires the stores, job manager and pipeline into one running platform.

use std::sync::Arc;
use std::time::Instant;

use crate::auth::{Credentials, Role, Users};
use crate::catalog::Catalog;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::jobs::JobManager;
use crate::package::Registry;
use crate::pipeline::{Pipeline, PipelineSettings};
use crate::store::DocStore;

pub struct Platform {
    pub config: Config,
    pub catalog: Catalog,
    pub store: Arc<DocStore>,
    pub users: Users,
    pub credentials: Credentials,
    pub jobs: JobManager,
    pub functions: Pipeline,
    pub started: Instant,
    /// Token of the administrator created on first start, when none was
    /// configured. The caller is expected to show it once.
    pub bootstrap_token: Option<String>,
}

impl Platform {
    /// Opens (or initializes) the data directory and starts the backend
    /// workers. Must be called inside a tokio runtime.
    pub fn start(config: Config) -> Result<Arc<Self>> {
        config.validate().map_err(|e| Error::BadRequest(e.to_string()))?;
        let catalog = match &config.catalog {
            Some(path) => Catalog::load(path),
            None => Ok(Catalog::builtin()),
        }
        .map_err(|e| Error::BadRequest(e.to_string()))?;
        let store = Arc::new(DocStore::open(config.data_dir.join("db"))?);
        let registry = Registry::open(config.data_dir.join("registry"), store.clone())?;
        let users = Users::load(store.clone())?;
        let mut bootstrap_token = None;
        if users.is_empty() {
            let (_, token) = users.create("admin", Role::Administrator, config.admin_token.clone())?;
            if config.admin_token.is_none() {
                bootstrap_token = Some(token);
            }
        }
        let credentials = Credentials::new(store.clone());
        let jobs = JobManager::start(&catalog, store.clone(), config.max_qubits, config.jitter_seed)?;
        let functions = Pipeline::start(
            store.clone(),
            registry,
            PipelineSettings {
                max_qubits: config.max_qubits,
                max_replicas: config.max_replicas,
                cold_start: config.cold_start(),
            },
        )?;
        Ok(Arc::new(Platform {
            config,
            catalog,
            store,
            users,
            credentials,
            jobs,
            functions,
            started: Instant::now(),
            bootstrap_token,
        }))
    }
}
