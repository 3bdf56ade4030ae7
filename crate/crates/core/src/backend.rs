//! Backend model, least-busy backend selection and pay-per-use pricing.

use alloc::string::String;
use alloc::vec::Vec;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendType {
    InternalSimulator,
    ExternalSimulator,
    Qpu,
}

impl BackendType {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "internal_simulator" => Some(BackendType::InternalSimulator),
            "external_simulator" | "simulator" => Some(BackendType::ExternalSimulator),
            "qpu" => Some(BackendType::Qpu),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BackendType::InternalSimulator => "internal_simulator",
            BackendType::ExternalSimulator => "external_simulator",
            BackendType::Qpu => "qpu",
        }
    }
}

/// Pay-per-use price list: a fixed charge per task plus a charge per shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Pricing {
    pub per_task: Decimal,
    pub per_shot: Decimal,
}

impl Pricing {
    pub fn new(per_task: Decimal, per_shot: Decimal) -> Self {
        Pricing { per_task, per_shot }
    }

    /// `tasks * per_task + shots * per_shot`, exact.
    pub fn estimate(&self, tasks: u64, shots: u64) -> Decimal {
        Decimal::from(tasks) * self.per_task + Decimal::from(shots) * self.per_shot
    }
}

/// Rounds a currency amount to cents (half away from zero) for display.
pub fn to_cents(amount: Decimal) -> Decimal {
    let mut d = amount.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
    d.rescale(2);
    d
}

/// Point-in-time view of one execution target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backend {
    pub name: String,
    pub provider: String,
    #[serde(rename = "type")]
    pub backend_type: BackendType,
    pub qubits: usize,
    pub operational: bool,
    pub queue_length: usize,
    pub pricing: Pricing,
}

pub fn estimate_cost(backend: &Backend, tasks: u64, shots: u64) -> Decimal {
    backend.pricing.estimate(tasks, shots)
}

/// How the caller wants a backend chosen.
///
/// `types: None` accepts every backend type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BackendPreference {
    pub internal: bool,
    pub autoselect: bool,
    pub types: Option<Vec<BackendType>>,
    pub backend_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("no operational backend with at least {required_qubits} qubits matches the request")]
    NoEligibleBackend { required_qubits: usize },
    #[error("backend `{0}` not found")]
    BackendNotFound(String),
    #[error("cannot pick from an empty backend list")]
    EmptyList,
}

/// Shortest queue wins; ties go to the lexicographically smallest name.
pub fn get_least_busy<'a>(backends: &[&'a Backend]) -> Result<&'a Backend, SelectionError> {
    backends
        .iter()
        .copied()
        .min_by(|a, b| {
            a.queue_length
                .cmp(&b.queue_length)
                .then_with(|| a.name.cmp(&b.name))
        })
        .ok_or(SelectionError::EmptyList)
}

pub fn is_eligible(b: &Backend, required_qubits: usize, pref: &BackendPreference) -> bool {
    b.qubits >= required_qubits
        && b.operational
        && pref
            .types
            .as_ref()
            .map_or(true, |types| types.contains(&b.backend_type))
}

/// Backend selection over the internal backends and the backends of the
/// caller's provider.
///
/// Internal requests return the named internal backend (or the first one).
/// Otherwise the provider's backends are filtered by capacity, operational
/// flag and type; autoselect takes the least busy, a named request succeeds
/// only when the named backend survived the filter.
pub fn backend_selection<'a>(
    required_qubits: usize,
    pref: &BackendPreference,
    internal: &'a [Backend],
    provider_backends: &'a [Backend],
) -> Result<&'a Backend, SelectionError> {
    if pref.internal {
        return match &pref.backend_name {
            Some(name) => internal
                .iter()
                .find(|b| &b.name == name)
                .ok_or_else(|| SelectionError::BackendNotFound(name.clone())),
            None => internal
                .first()
                .ok_or_else(|| SelectionError::BackendNotFound("internal".into())),
        };
    }
    let eligible: Vec<&Backend> = provider_backends
        .iter()
        .filter(|b| is_eligible(b, required_qubits, pref))
        .collect();
    let none = SelectionError::NoEligibleBackend { required_qubits };
    if pref.autoselect {
        return get_least_busy(&eligible).map_err(|_| none);
    }
    let name = pref
        .backend_name
        .as_ref()
        .ok_or_else(|| SelectionError::BackendNotFound(String::new()))?;
    if let Some(b) = eligible.iter().find(|b| &b.name == name) {
        return Ok(b);
    }
    if provider_backends.iter().any(|b| &b.name == name) {
        Err(none)
    } else {
        Err(SelectionError::BackendNotFound(name.clone()))
    }
}
