//! Client side of one worker: an in-process native executor or a remote
//! process speaking the HTTP protocol.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::executor::NativeExecutor;
use super::protocol::{
    ErrorKind, EvalRequest, EvalResponse, FeatSelectRequest, FeatSelectResponse, HealthResponse,
    LogitRequest, LogitResponse, RegisterRequest, RegisterResponse, Reply, ServiceError,
};
use crate::store::FeatureDataset;

/// What a worker needs to register a dataset: the in-memory copy for native
/// workers, the file path for remote ones.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub dataset: Arc<FeatureDataset>,
    pub path: Option<PathBuf>,
}

impl DatasetSource {
    pub fn in_memory(dataset: Arc<FeatureDataset>) -> Self {
        Self { dataset, path: None }
    }

    pub fn from_file(dataset: Arc<FeatureDataset>, path: impl Into<PathBuf>) -> Self {
        Self { dataset, path: Some(path.into()) }
    }
}

pub trait WorkerClient: Send + Sync {
    fn register(&self, source: &DatasetSource) -> Result<String, ServiceError>;
    fn feat_select(&self, req: &FeatSelectRequest, deadline: Duration) -> Result<Vec<usize>, ServiceError>;
    fn logit_comput(&self, req: &LogitRequest, deadline: Duration) -> Result<String, ServiceError>;
    fn eval(&self, handle: &str, deadline: Duration) -> Result<f64, ServiceError>;
    fn health(&self, deadline: Duration) -> Result<(), ServiceError>;
}

/// Runs requests on a helper thread so a deadline can be enforced; the
/// executor's cancel flag is raised when the deadline passes.
#[derive(Debug, Clone)]
pub struct LocalWorker {
    executor: Arc<NativeExecutor>,
}

impl LocalWorker {
    pub fn new(executor: Arc<NativeExecutor>) -> Self {
        Self { executor }
    }

    pub fn executor(&self) -> &Arc<NativeExecutor> {
        &self.executor
    }

    fn with_deadline<T: Send + 'static>(
        &self,
        deadline: Duration,
        f: impl FnOnce(&NativeExecutor, &AtomicBool) -> Result<T, ServiceError> + Send + 'static,
    ) -> Result<T, ServiceError> {
        let cancel = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let ex = Arc::clone(&self.executor);
        let flag = Arc::clone(&cancel);
        thread::spawn(move || {
            let _ = tx.send(f(&ex, &flag));
        });
        match rx.recv_timeout(deadline) {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                cancel.store(true, Ordering::Relaxed);
                Err(ServiceError::new(
                    ErrorKind::Timeout,
                    format!("no result within {deadline:?}"),
                ))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(ServiceError::new(
                ErrorKind::WorkerCrash,
                "native executor thread panicked",
            )),
        }
    }
}

impl WorkerClient for LocalWorker {
    fn register(&self, source: &DatasetSource) -> Result<String, ServiceError> {
        Ok(self.executor.register(Arc::clone(&source.dataset)))
    }

    fn feat_select(&self, req: &FeatSelectRequest, deadline: Duration) -> Result<Vec<usize>, ServiceError> {
        let req = req.clone();
        self.with_deadline(deadline, move |ex, c| ex.feat_select(&req, c))
    }

    fn logit_comput(&self, req: &LogitRequest, deadline: Duration) -> Result<String, ServiceError> {
        let req = req.clone();
        self.with_deadline(deadline, move |ex, c| ex.logit_comput(&req, c))
    }

    fn eval(&self, handle: &str, deadline: Duration) -> Result<f64, ServiceError> {
        let handle = handle.to_string();
        self.with_deadline(deadline, move |ex, _| ex.eval(&handle))
    }

    fn health(&self, _deadline: Duration) -> Result<(), ServiceError> {
        Ok(())
    }
}

/// HTTP client for a worker process.
#[derive(Debug, Clone)]
pub struct RemoteWorker {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl RemoteWorker {
    pub fn new(base_url: impl Into<String>) -> Result<Self, ServiceError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ServiceError::new(ErrorKind::WorkerCrash, format!("http client: {e}")))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        route: &str,
        body: &B,
        deadline: Duration,
    ) -> Result<R, ServiceError> {
        let resp = self
            .client
            .post(format!("{}{route}", self.base_url))
            .timeout(deadline)
            .json(body)
            .send()
            .map_err(transport)?;
        decode(resp)
    }
}

fn transport(e: reqwest::Error) -> ServiceError {
    if e.is_timeout() {
        ServiceError::new(ErrorKind::Timeout, e.to_string())
    } else {
        ServiceError::new(ErrorKind::WorkerCrash, e.to_string())
    }
}

fn decode<R: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<R, ServiceError> {
    let text = resp.text().map_err(transport)?;
    serde_json::from_str::<Reply<R>>(&text)
        .map_err(|e| ServiceError::new(ErrorKind::WorkerCrash, format!("undecodable reply ({e}): {text}")))?
        .into_result()
}

impl WorkerClient for RemoteWorker {
    fn register(&self, source: &DatasetSource) -> Result<String, ServiceError> {
        let path = source.path.as_ref().ok_or_else(|| {
            ServiceError::new(ErrorKind::BadRequest, "remote workers need a dataset file path")
        })?;
        let r: RegisterResponse = self.post(
            "/register_dataset",
            &RegisterRequest { path: path.display().to_string() },
            Duration::from_secs(60),
        )?;
        Ok(r.dataset_id)
    }

    fn feat_select(&self, req: &FeatSelectRequest, deadline: Duration) -> Result<Vec<usize>, ServiceError> {
        let r: FeatSelectResponse = self.post("/feat_select", req, deadline)?;
        Ok(r.indices)
    }

    fn logit_comput(&self, req: &LogitRequest, deadline: Duration) -> Result<String, ServiceError> {
        let r: LogitResponse = self.post("/logit_comput", req, deadline)?;
        Ok(r.handle)
    }

    fn eval(&self, handle: &str, deadline: Duration) -> Result<f64, ServiceError> {
        let r: EvalResponse = self.post("/eval", &EvalRequest { handle: handle.into() }, deadline)?;
        Ok(r.accuracy)
    }

    fn health(&self, deadline: Duration) -> Result<(), ServiceError> {
        let resp = self
            .client
            .get(format!("{}/health", self.base_url))
            .timeout(deadline)
            .send()
            .map_err(transport)?;
        let h: HealthResponse = decode(resp)?;
        if h.status == "ok" {
            Ok(())
        } else {
            Err(ServiceError::new(ErrorKind::WorkerCrash, format!("health status `{}`", h.status)))
        }
    }
}
