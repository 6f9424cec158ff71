//! Worker-side state and the native backend: registered datasets, few-shot
//! draws, result handles, and directive execution.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::audit::AccessLog;
use super::directive::{parse_logits, parse_select, LogitsKind, SelectDirective};
use super::protocol::{ErrorKind, FeatSelectRequest, LogitRequest, ServiceError};
use crate::adapt::{
    ape_logits, ape_select_channels, clip_zero_shot_logits, gda_logits, tip_adapter_logits,
    top1_accuracy, AdaptError, AdaptInputs, ChannelSet, HyperParams, LogitsMatrix,
};
use crate::store::{load_dataset, sample_few_shot, synth_dataset, FeatureDataset, FewShotTask, Split, SynthSpec};

/// Id of the two-class micro dataset every worker carries for self-tests.
pub const PROBE_DATASET_ID: &str = "__probe__";

pub const DEFAULT_HANDLE_TTL: Duration = Duration::from_secs(600);

static NONCE: AtomicU64 = AtomicU64::new(0);

struct HandleEntry {
    logits: LogitsMatrix,
    dataset: Arc<FeatureDataset>,
    split: Split,
    created: Instant,
}

type TaskKey = (String, usize, u64);

pub struct NativeExecutor {
    datasets: RwLock<HashMap<String, Arc<FeatureDataset>>>,
    tasks: Mutex<HashMap<TaskKey, Arc<FewShotTask>>>,
    handles: Mutex<HashMap<String, HandleEntry>>,
    next_handle: AtomicU64,
    nonce: String,
    handle_ttl: Duration,
    data_root: Option<PathBuf>,
    audit: Option<Arc<AccessLog>>,
}

impl std::fmt::Debug for NativeExecutor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NativeExecutor")
            .field("nonce", &self.nonce)
            .field("datasets", &self.datasets.read().map(|d| d.len()).unwrap_or(0))
            .finish_non_exhaustive()
    }
}

impl Default for NativeExecutor {
    fn default() -> Self {
        Self::new()
    }
}

fn bad_request(msg: impl Into<String>) -> ServiceError {
    ServiceError::new(ErrorKind::BadRequest, msg)
}

fn candidate(e: AdaptError) -> ServiceError {
    ServiceError::new(ErrorKind::CandidateError, e.to_string())
}

pub fn probe_dataset() -> FeatureDataset {
    let spec = SynthSpec::new(PROBE_DATASET_ID, 4, 2, 2, 0.0, 0.0);
    synth_dataset(&spec, 0).expect("probe spec is valid")
}

impl NativeExecutor {
    pub fn new() -> Self {
        let pid = std::process::id() as u64;
        let n = NONCE.fetch_add(1, Ordering::Relaxed);
        let probe = Arc::new(probe_dataset());
        let mut datasets = HashMap::new();
        datasets.insert(PROBE_DATASET_ID.to_string(), probe);
        Self {
            datasets: RwLock::new(datasets),
            tasks: Mutex::new(HashMap::new()),
            handles: Mutex::new(HashMap::new()),
            next_handle: AtomicU64::new(0),
            nonce: format!("{pid:x}.{n:x}"),
            handle_ttl: DEFAULT_HANDLE_TTL,
            data_root: None,
            audit: None,
        }
    }

    /// Relative paths in `/register_dataset` resolve against `root`.
    pub fn with_data_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.data_root = Some(root.into());
        self
    }

    pub fn with_handle_ttl(mut self, ttl: Duration) -> Self {
        self.handle_ttl = ttl;
        self
    }

    /// Records every label read in `log`.
    pub fn with_audit(mut self, log: Arc<AccessLog>) -> Self {
        self.audit = Some(log);
        self
    }

    /// Registers an in-memory dataset and returns its content id.
    pub fn register(&self, ds: Arc<FeatureDataset>) -> String {
        let id = ds.id().to_string();
        self.datasets.write().unwrap().entry(id.clone()).or_insert(ds);
        id
    }

    pub fn register_path(&self, path: &str) -> Result<String, ServiceError> {
        let p = Path::new(path);
        let full = match (&self.data_root, p.is_relative()) {
            (Some(root), true) => root.join(p),
            _ => p.to_path_buf(),
        };
        let ds = load_dataset(&full)
            .map_err(|e| bad_request(format!("cannot load {}: {e}", full.display())))?;
        Ok(self.register(Arc::new(ds)))
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<FeatureDataset>, ServiceError> {
        self.datasets
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::new(ErrorKind::UnknownDataset, format!("unknown dataset `{id}`")))
    }

    pub fn live_handles(&self) -> usize {
        self.handles.lock().unwrap().len()
    }

    fn task(&self, id: &str, shots: usize, seed: u64) -> Result<Arc<FewShotTask>, ServiceError> {
        let ds = self.dataset(id)?;
        let key = (id.to_string(), shots, seed);
        if let Some(t) = self.tasks.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let task = Arc::new(sample_few_shot(&ds, shots, seed).map_err(|e| bad_request(e.to_string()))?);
        if let Some(log) = &self.audit {
            log.record(Split::Train);
        }
        self.tasks.lock().unwrap().insert(key, Arc::clone(&task));
        Ok(task)
    }

    pub fn feat_select(
        &self,
        req: &FeatSelectRequest,
        cancel: &AtomicBool,
    ) -> Result<Vec<usize>, ServiceError> {
        let directive = parse_select(&req.code)?;
        let task = self.task(&req.dataset_id, req.shots, req.seed)?;
        let d = task.dim();
        if req.topk == 0 || req.topk > d {
            return Err(bad_request(format!("topk {} outside [1, {d}]", req.topk)));
        }
        let hp = HyperParams {
            w0: req.w0,
            w1: req.w1,
            topk: req.topk,
            alpha0: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
        };
        let raw: Vec<usize> = match directive {
            SelectDirective::ApeSelect => {
                ape_select_channels(&task.clip_weights, &task.train_feats, &task.train_labels, &hp)
                    .map_err(candidate)?
                    .indices()
                    .to_vec()
            }
            SelectDirective::FirstChannels => (0..req.topk).collect(),
            SelectDirective::Fail => {
                return Err(ServiceError::new(ErrorKind::CandidateError, "candidate raised"))
            }
            SelectDirective::Duplicate => vec![0; req.topk],
            SelectDirective::Sleep { ms } => {
                pause(Duration::from_millis(ms), cancel)?;
                (0..req.topk).collect()
            }
            SelectDirective::Spin => return spin(cancel),
        };
        validate_indices(raw, req.topk, d)
    }

    pub fn logit_comput(
        &self,
        req: &LogitRequest,
        cancel: &AtomicBool,
    ) -> Result<String, ServiceError> {
        let directive = parse_logits(&req.code)?;
        let task = self.task(&req.dataset_id, req.shots, req.seed)?;
        let target = match &req.eval_dataset_id {
            Some(id) => self.dataset(id)?,
            None => Arc::clone(task.dataset()),
        };
        let d = task.dim();
        if target.dim() != d || target.num_classes() != task.num_classes {
            return Err(bad_request(format!(
                "evaluation dataset is {}x{}, few-shot source is {d}x{}",
                target.dim(),
                target.num_classes(),
                task.num_classes
            )));
        }
        let channels = match &req.indices {
            Some(ix) => ChannelSet::new(ix.clone(), d).map_err(|e| bad_request(e.to_string()))?,
            None => ChannelSet::all(d),
        };
        let hp = HyperParams {
            w0: 0.5,
            w1: 0.5,
            topk: channels.len(),
            alpha0: req.alpha0,
            alpha1: req.alpha1,
            alpha2: req.alpha2,
        };
        let test = target.split(req.split).feats.map(|v| v as f64);
        let logits = run_logits(directive.kind, directive.dims, &task, &test, &channels, &hp, cancel)?;
        if logits.nrows() != test.nrows() || logits.ncols() != task.num_classes {
            return Err(ServiceError::new(
                ErrorKind::InvalidOutput,
                format!("logits are {}x{}", logits.nrows(), logits.ncols()),
            ));
        }
        if !logits.is_finite() {
            return Err(ServiceError::new(ErrorKind::InvalidOutput, "logits contain NaN or Inf"));
        }
        let handle = format!("{}-{}", self.nonce, self.next_handle.fetch_add(1, Ordering::Relaxed));
        let mut handles = self.handles.lock().unwrap();
        let ttl = self.handle_ttl;
        handles.retain(|_, h| h.created.elapsed() < ttl);
        handles.insert(
            handle.clone(),
            HandleEntry { logits, dataset: target, split: req.split, created: Instant::now() },
        );
        Ok(handle)
    }

    /// Scores a handle and releases it.
    pub fn eval(&self, handle: &str) -> Result<f64, ServiceError> {
        let entry = self.handles.lock().unwrap().remove(handle);
        let entry = match entry {
            Some(e) if e.created.elapsed() < self.handle_ttl => e,
            _ => {
                return Err(ServiceError::new(
                    ErrorKind::UnknownHandle,
                    format!("unknown or expired handle `{handle}`"),
                ))
            }
        };
        if let Some(log) = &self.audit {
            log.record(entry.split);
        }
        let labels = &entry.dataset.split(entry.split).labels;
        top1_accuracy(&entry.logits, labels).map_err(|e| ServiceError::new(ErrorKind::InvalidOutput, e.to_string()))
    }

    /// Canonical selection + logits + eval on the built-in micro dataset.
    pub fn selftest(&self) -> Result<(), ServiceError> {
        let never = AtomicBool::new(false);
        let ds = self.dataset(PROBE_DATASET_ID)?;
        let indices = self.feat_select(&probe_select_request(ds.dim()), &never)?;
        let handle = self.logit_comput(&probe_logit_request(indices), &never)?;
        let acc = self.eval(&handle)?;
        if acc == 1.0 {
            Ok(())
        } else {
            Err(ServiceError::new(
                ErrorKind::CandidateError,
                format!("selftest accuracy {acc}, expected 1"),
            ))
        }
    }
}

pub fn probe_select_request(d: usize) -> FeatSelectRequest {
    FeatSelectRequest {
        dataset_id: PROBE_DATASET_ID.into(),
        shots: 1,
        seed: 0,
        code: "#native: ape_select".into(),
        w0: 0.5,
        w1: 0.5,
        topk: d,
    }
}

pub fn probe_logit_request(indices: Vec<usize>) -> LogitRequest {
    LogitRequest {
        dataset_id: PROBE_DATASET_ID.into(),
        shots: 1,
        seed: 0,
        split: Split::Test,
        code: "#native: tip_adapter".into(),
        indices: Some(indices),
        alpha0: 1.0,
        alpha1: 1.0,
        alpha2: 1.0,
        eval_dataset_id: None,
    }
}

fn validate_indices(mut raw: Vec<usize>, topk: usize, d: usize) -> Result<Vec<usize>, ServiceError> {
    let invalid = |m: String| ServiceError::new(ErrorKind::InvalidOutput, m);
    if let Some(&bad) = raw.iter().find(|&&i| i >= d) {
        return Err(invalid(format!("index {bad} outside [0, {d})")));
    }
    raw.sort_unstable();
    if raw.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("duplicate channel indices".into()));
    }
    if raw.len() != topk {
        return Err(invalid(format!("{} indices returned, topk is {topk}", raw.len())));
    }
    Ok(raw)
}

fn timed_out() -> ServiceError {
    ServiceError::new(ErrorKind::Timeout, "cancelled at deadline")
}

fn pause(total: Duration, cancel: &AtomicBool) -> Result<(), ServiceError> {
    let end = Instant::now() + total;
    while Instant::now() < end {
        if cancel.load(Ordering::Relaxed) {
            return Err(timed_out());
        }
        std::thread::sleep(Duration::from_millis(5).min(end.saturating_duration_since(Instant::now())));
    }
    Ok(())
}

fn spin<T>(cancel: &AtomicBool) -> Result<T, ServiceError> {
    while !cancel.load(Ordering::Relaxed) {
        std::hint::spin_loop();
    }
    Err(timed_out())
}

fn leading_columns(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    m.columns(0, n).into_owned()
}

fn run_logits(
    kind: LogitsKind,
    dims: Option<usize>,
    task: &FewShotTask,
    test: &DMatrix<f64>,
    channels: &ChannelSet,
    hp: &HyperParams,
    cancel: &AtomicBool,
) -> Result<LogitsMatrix, ServiceError> {
    let d = task.dim();
    let restricted;
    let (train, test, clip, channels) = match dims {
        Some(n) if n < d => {
            let kept: Vec<usize> = channels.indices().iter().copied().filter(|&i| i < n).collect();
            let kept = if kept.is_empty() { ChannelSet::all(n) } else { ChannelSet::new(kept, n).map_err(candidate)? };
            restricted = (
                leading_columns(&task.train_feats, n),
                leading_columns(test, n),
                task.clip_weights.rows(0, n).into_owned(),
            );
            (&restricted.0, &restricted.1, &restricted.2, kept)
        }
        _ => (&task.train_feats, test, &task.clip_weights, channels.clone()),
    };
    let inputs = AdaptInputs {
        train_feats: train,
        train_labels: &task.train_labels,
        test_feats: test,
        clip_weights: clip,
    };
    let hp = HyperParams { topk: channels.len(), ..*hp };
    match kind {
        LogitsKind::ZeroShot => clip_zero_shot_logits(test, clip).map_err(candidate),
        LogitsKind::TipAdapter => tip_adapter_logits(&inputs, &hp).map_err(candidate),
        LogitsKind::Ape => ape_logits(&inputs, &channels, &hp).map_err(candidate),
        LogitsKind::Gda => gda_logits(&inputs, &hp).map_err(candidate),
        LogitsKind::Fail => Err(ServiceError::new(ErrorKind::CandidateError, "candidate raised")),
        LogitsKind::Nan => Ok(LogitsMatrix(DMatrix::from_element(test.nrows(), clip.ncols(), f64::NAN))),
        LogitsKind::Sleep { ms } => {
            pause(Duration::from_millis(ms), cancel)?;
            clip_zero_shot_logits(test, clip).map_err(candidate)
        }
        LogitsKind::Spin => spin(cancel),
    }
}
