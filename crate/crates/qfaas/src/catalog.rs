//! Backend catalog file: the fleet of internal and mock provider backends
//! with their prices and simulated timing.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use qfaas_core::backend::{Backend, BackendType, Pricing};
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The catalog shipped with the binary.
pub const DEFAULT_CATALOG: &str = include_str!("../catalog/default.json");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("reading catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing catalog: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate backend name `{0}`")]
    Duplicate(String),
    #[error("backend `{0}` must have at least one qubit")]
    NoQubits(String),
    #[error("backend `{0}` has a negative price")]
    NegativePrice(String),
    #[error("catalog has no internal backend")]
    NoInternal,
}

/// Prices may be written as JSON strings or numbers; numbers are read back
/// through their shortest decimal text so `0.00035` stays exact.
fn decimal_from_json<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    let text = match &v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        _ => return Err(serde::de::Error::custom("price must be a number or string")),
    };
    Decimal::from_str(&text)
        .or_else(|_| Decimal::from_scientific(&text))
        .map_err(serde::de::Error::custom)
}

fn decimal_to_json<S: Serializer>(d: &Decimal, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&d.normalize().to_string())
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CatalogEntry {
    pub name: String,
    pub provider: String,
    #[serde(rename = "type")]
    pub backend_type: BackendType,
    pub qubits: usize,
    #[serde(default = "yes")]
    pub operational: bool,
    #[serde(deserialize_with = "decimal_from_json", serialize_with = "decimal_to_json")]
    pub per_task_price: Decimal,
    #[serde(deserialize_with = "decimal_from_json", serialize_with = "decimal_to_json")]
    pub per_shot_price: Decimal,
    #[serde(default)]
    pub queue_delay_millis: u64,
    #[serde(default)]
    pub jitter_millis: u64,
    #[serde(default)]
    pub base_millis: u64,
    #[serde(default)]
    pub per_shot_micros: u64,
    #[serde(default)]
    pub per_gate_micros: u64,
}

impl CatalogEntry {
    pub fn pricing(&self) -> Pricing {
        Pricing::new(self.per_task_price, self.per_shot_price)
    }

    /// Snapshot as a selection candidate with the given live queue length.
    pub fn to_backend(&self, queue_length: usize) -> Backend {
        Backend {
            name: self.name.clone(),
            provider: self.provider.clone(),
            backend_type: self.backend_type,
            qubits: self.qubits,
            operational: self.operational,
            queue_length,
            pricing: self.pricing(),
        }
    }

    /// Simulated execution time on top of the real simulator run.
    pub fn service_time(&self, shots: u64, gates: usize) -> Duration {
        Duration::from_millis(self.base_millis)
            + Duration::from_micros(self.per_shot_micros.saturating_mul(shots))
            + Duration::from_micros(self.per_gate_micros.saturating_mul(gates as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProviderKind {
    Internal,
    MockIbmq,
    MockBraket,
}

impl ProviderKind {
    /// `internal` and `ibmq` are recognised by name; any other provider
    /// behaves like the Braket mock.
    pub fn for_provider(name: &str) -> Self {
        match name {
            "internal" => ProviderKind::Internal,
            "ibmq" => ProviderKind::MockIbmq,
            _ => ProviderKind::MockBraket,
        }
    }

    pub fn needs_credential(self) -> bool {
        self != ProviderKind::Internal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderInfo {
    pub name: String,
    pub kind: ProviderKind,
    pub backends: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let entries: Vec<CatalogEntry> = serde_json::from_str(text)?;
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(CatalogError::Duplicate(e.name.clone()));
            }
            if e.qubits == 0 {
                return Err(CatalogError::NoQubits(e.name.clone()));
            }
            if e.per_task_price.is_sign_negative() || e.per_shot_price.is_sign_negative() {
                return Err(CatalogError::NegativePrice(e.name.clone()));
            }
        }
        if !entries.iter().any(|e| e.provider == "internal") {
            return Err(CatalogError::NoInternal);
        }
        Ok(Catalog { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn get(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn providers(&self) -> Vec<ProviderInfo> {
        let mut map: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(&e.provider).or_default().push(e.name.clone());
        }
        map.into_iter()
            .map(|(name, backends)| ProviderInfo {
                name: name.to_owned(),
                kind: ProviderKind::for_provider(name),
                backends,
            })
            .collect()
    }
}
