//! JSON bodies of the evaluation services.
//!
//! All tensors stay worker-side: requests name a registered dataset and a
//! few-shot draw `(shots, seed)`, logits live behind opaque handles.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::Split;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub dataset_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatSelectRequest {
    pub dataset_id: String,
    pub shots: usize,
    pub seed: u64,
    pub code: String,
    pub w0: f64,
    pub w1: f64,
    pub topk: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatSelectResponse {
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRequest {
    pub dataset_id: String,
    pub shots: usize,
    pub seed: u64,
    pub split: Split,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Dataset whose `split` is scored, when it differs from the one the
    /// few-shot set is drawn from (domain transfer). Must share `d` and `C`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_dataset_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogitResponse {
    pub handle: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub handle: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    Timeout,
    WorkerCrash,
    CandidateError,
    InvalidOutput,
    UnknownDataset,
    UnknownHandle,
    BadRequest,
}

impl ErrorKind {
    /// Failures attributable to the candidate code rather than the infrastructure.
    pub fn is_candidate_fault(self) -> bool {
        matches!(
            self,
            ErrorKind::Timeout | ErrorKind::CandidateError | ErrorKind::InvalidOutput
        )
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind}: {message}")]
pub struct ServiceError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ServiceError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

/// `{ ...payload }` on success, `{"error": {kind, message}}` on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply<T> {
    Err { error: ServiceError },
    Ok(T),
}

impl<T> From<Result<T, ServiceError>> for Reply<T> {
    fn from(r: Result<T, ServiceError>) -> Self {
        match r {
            Ok(v) => Reply::Ok(v),
            Err(error) => Reply::Err { error },
        }
    }
}

impl<T> Reply<T> {
    pub fn into_result(self) -> Result<T, ServiceError> {
        match self {
            Reply::Ok(v) => Ok(v),
            Reply::Err { error } => Err(error),
        }
    }
}
