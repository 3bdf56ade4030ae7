//! Platform error type and its mapping onto HTTP status codes and
//! machine-readable error codes.

use qfaas_core::backend::SelectionError;
use qfaas_core::ir::IrError;
use qfaas_core::plugins::PluginError;
use qfaas_core::shor::ShorError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::store::StorageError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing or invalid access token")]
    InvalidToken,
    #[error("{0}")]
    PermissionError(String),
    #[error("invalid function name `{0}`: must match ^[a-z][a-z0-9-]{{0,62}}$")]
    FunctionNameError(String),
    #[error("function `{0}` already exists")]
    FunctionExists(String),
    #[error("function `{0}` not found")]
    FunctionNotFound(String),
    #[error("build failed: {message}")]
    BuildError { message: String, detail: Value },
    #[error("{0}")]
    LimitExceeded(String),
    #[error("user `{0}` not found")]
    UserNotFound(String),
    #[error("user `{0}` already exists")]
    UserExists(String),
    #[error("provider `{0}` not found")]
    ProviderNotFound(String),
    #[error("no credential registered for provider `{0}`")]
    ProviderAuthError(String),
    #[error("backend `{0}` not found")]
    BackendNotFound(String),
    #[error("no operational backend with at least {0} qubits matches the request")]
    NoEligibleBackend(usize),
    #[error("circuit needs {required} qubits, backend `{backend}` has {capacity}")]
    CapacityExceeded {
        backend: String,
        required: usize,
        capacity: usize,
    },
    #[error("backend `{0}` is not operational")]
    BackendUnavailable(String),
    #[error("job `{0}` not found")]
    JobNotFound(String),
    #[error("job `{0}` has not finished")]
    JobNotFinished(String),
    #[error("job `{job_id}` failed: {message}")]
    JobExecutionError { job_id: String, message: String },
    #[error("{0}")]
    InputOutOfRange(String),
    #[error("{requested} qubits exceeds the limit of {limit}")]
    QubitLimitExceeded { requested: usize, limit: usize },
    #[error("{0}")]
    InvalidN(String),
    #[error("{0}")]
    NotCoprime(String),
    #[error("no measured phase yields a usable even period")]
    NoPeriodFound,
    #[error("{0}")]
    UnknownPlugin(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("no route for {0}")]
    NotFound(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("{0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidToken => "InvalidToken",
            Error::PermissionError(_) => "PermissionError",
            Error::FunctionNameError(_) => "FunctionNameError",
            Error::FunctionExists(_) => "FunctionExists",
            Error::FunctionNotFound(_) => "FunctionNotFound",
            Error::BuildError { .. } => "BuildError",
            Error::LimitExceeded(_) => "LimitExceeded",
            Error::UserNotFound(_) => "UserNotFound",
            Error::UserExists(_) => "UserExists",
            Error::ProviderNotFound(_) => "ProviderNotFound",
            Error::ProviderAuthError(_) => "ProviderAuthError",
            Error::BackendNotFound(_) => "BackendNotFound",
            Error::NoEligibleBackend(_) => "NoEligibleBackend",
            Error::CapacityExceeded { .. } => "CapacityExceeded",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::JobNotFound(_) => "JobNotFound",
            Error::JobNotFinished(_) => "JobNotFinished",
            Error::JobExecutionError { .. } => "JobExecutionError",
            Error::InputOutOfRange(_) => "InputOutOfRange",
            Error::QubitLimitExceeded { .. } => "QubitLimitExceeded",
            Error::InvalidN(_) => "InvalidN",
            Error::NotCoprime(_) => "NotCoprime",
            Error::NoPeriodFound => "NoPeriodFound",
            Error::UnknownPlugin(_) => "UnknownPlugin",
            Error::BadRequest(_) => "BadRequest",
            Error::NotFound(_) => "NotFound",
            Error::Storage(StorageError::NotFound { .. }) => "NotFound",
            Error::Storage(_) => "StorageError",
            Error::Internal(_) => "InternalError",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            Error::InvalidToken => 401,
            Error::PermissionError(_) => 403,
            Error::FunctionNotFound(_)
            | Error::UserNotFound(_)
            | Error::ProviderNotFound(_)
            | Error::BackendNotFound(_)
            | Error::JobNotFound(_)
            | Error::NotFound(_)
            | Error::Storage(StorageError::NotFound { .. }) => 404,
            Error::FunctionExists(_) | Error::UserExists(_) | Error::JobNotFinished(_) => 409,
            Error::BuildError { .. }
            | Error::NoEligibleBackend(_)
            | Error::CapacityExceeded { .. }
            | Error::NoPeriodFound => 422,
            Error::ProviderAuthError(_) => 424,
            Error::BackendUnavailable(_) => 503,
            Error::JobExecutionError { .. } => 502,
            Error::Storage(_) | Error::Internal(_) => 500,
            _ => 400,
        }
    }

    pub fn to_api(&self) -> ApiError {
        let detail = match self {
            Error::BuildError { detail, .. } => detail.clone(),
            Error::JobExecutionError { job_id, .. } => serde_json::json!({ "job_id": job_id }),
            _ => Value::Null,
        };
        ApiError {
            status: self.status(),
            code: self.code().to_owned(),
            message: self.to_string(),
            detail,
        }
    }

    pub fn forbidden(msg: impl Into<String>) -> Self {
        Error::PermissionError(msg.into())
    }
}

/// Error body returned by every failing endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

impl From<IrError> for Error {
    fn from(e: IrError) -> Self {
        match e {
            IrError::InputOutOfRange(m) => Error::InputOutOfRange(m),
            IrError::QubitLimitExceeded { requested, limit } => Error::QubitLimitExceeded { requested, limit },
            IrError::Shor(s) => s.into(),
            other => Error::InputOutOfRange(other.to_string()),
        }
    }
}

impl From<ShorError> for Error {
    fn from(e: ShorError) -> Self {
        match e {
            ShorError::InvalidN { .. } => Error::InvalidN(e.to_string()),
            ShorError::NotCoprime { .. } => Error::NotCoprime(e.to_string()),
            ShorError::NoPeriodFound => Error::NoPeriodFound,
        }
    }
}

impl From<PluginError> for Error {
    fn from(e: PluginError) -> Self {
        match e {
            PluginError::UnknownPlugin { .. } => Error::UnknownPlugin(e.to_string()),
            PluginError::Shor(s) => s.into(),
            PluginError::MissingShorContext => Error::BadRequest(e.to_string()),
        }
    }
}

impl From<SelectionError> for Error {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::NoEligibleBackend { required_qubits } => Error::NoEligibleBackend(required_qubits),
            SelectionError::BackendNotFound(name) => Error::BackendNotFound(name),
            SelectionError::EmptyList => Error::NoEligibleBackend(0),
        }
    }
}
