//! Server configuration: a TOML file plus environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct Config {
    /// Listen address, e.g. `127.0.0.1:8080`. Env: `QFAAS_ADDR`.
    pub addr: String,
    /// Root of the document store. Env: `QFAAS_DATA`.
    pub data_dir: PathBuf,
    /// Backend catalog file; the shipped catalog when absent.
    pub catalog: Option<PathBuf>,
    pub max_qubits: usize,
    pub max_replicas: u32,
    pub max_shots: u64,
    pub cold_start_millis: u64,
    /// Fixed overhead each replica adds to every invocation it serves.
    pub replica_overhead_millis: u64,
    pub wait_timeout_secs: u64,
    /// Seed for the mock providers' queue-delay jitter.
    pub jitter_seed: u64,
    /// Token for the bootstrap administrator created on first start.
    /// Env: `QFAAS_ADMIN_TOKEN`. Generated and printed when absent.
    pub admin_token: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            addr: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("qfaas-data"),
            catalog: None,
            max_qubits: qfaas_core::statevec::DEFAULT_MAX_QUBITS,
            max_replicas: 64,
            max_shots: 1_000_000,
            cold_start_millis: 500,
            replica_overhead_millis: 0,
            wait_timeout_secs: 300,
            jitter_seed: 0,
            admin_token: None,
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Applies `QFAAS_ADDR`, `QFAAS_DATA` and `QFAAS_ADMIN_TOKEN` from `env`.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) {
        if let Some(v) = env("QFAAS_ADDR") {
            self.addr = v;
        }
        if let Some(v) = env("QFAAS_DATA") {
            self.data_dir = v.into();
        }
        if let Some(v) = env("QFAAS_ADMIN_TOKEN") {
            self.admin_token = Some(v);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key, message: &str| {
            Err(ConfigError::Invalid {
                key,
                message: message.to_owned(),
            })
        };
        if self.max_qubits == 0 || self.max_qubits > 30 {
            return bad("maxQubits", "must be in 1..=30");
        }
        if self.max_shots == 0 {
            return bad("maxShots", "must be positive");
        }
        if let Some(t) = &self.admin_token {
            if t.len() < 16 {
                return bad("adminToken", "must be at least 16 characters");
            }
        }
        Ok(())
    }

    pub fn cold_start(&self) -> Duration {
        Duration::from_millis(self.cold_start_millis)
    }

    pub fn replica_overhead(&self) -> Duration {
        Duration::from_millis(self.replica_overhead_millis)
    }

    pub fn wait_timeout(&self) -> Duration {
        Duration::from_secs(self.wait_timeout_secs)
    }
}
