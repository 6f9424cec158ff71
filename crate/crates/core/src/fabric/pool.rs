//! Worker pool: dispatch, fitness orchestration, memoization and healing.

use std::collections::{HashMap, VecDeque};
use std::process::Child;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use super::executor::{probe_dataset, probe_logit_request, probe_select_request};
use super::launcher::{LaunchedWorker, SpawnFailure, WorkerLauncher};
use super::protocol::{ErrorKind, FeatSelectRequest, LogitRequest, ServiceError};
use super::worker::{DatasetSource, WorkerClient};
use crate::adapt::{fitness_from_accuracies, hyper_grid, HyperParams};
use crate::store::Split;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FabricConfig {
    pub workers: usize,
    #[serde(with = "secs")]
    pub call_timeout: Duration,
    /// How long a request waits for a free worker before giving up.
    #[serde(with = "secs")]
    pub acquire_timeout: Duration,
    #[serde(with = "secs")]
    pub probe_deadline: Duration,
    /// Extra attempts on another worker after a crash.
    pub crash_retries: u32,
}

impl Default for FabricConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            call_timeout: Duration::from_secs(60),
            acquire_timeout: Duration::from_secs(300),
            probe_deadline: Duration::from_secs(10),
            crash_retries: 2,
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    /// The candidate's code failed (raised, timed out, or produced bad output).
    #[error("candidate failed: {0}")]
    Candidate(ServiceError),
    #[error("infrastructure failure: {0}")]
    Infrastructure(String),
}

impl FabricError {
    pub fn is_candidate(&self) -> bool {
        matches!(self, FabricError::Candidate(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkerState {
    Healthy,
    Suspect,
    Dead,
}

/// One few-shot draw on a registered dataset, as scored by the fitness function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HoldoutTask {
    pub dataset_id: String,
    pub shots: usize,
    pub seed: u64,
    pub d: usize,
}

/// Call counters; the selection counter proves a strategy never selected.
#[derive(Debug, Default)]
pub struct ServiceStats {
    feat_select: AtomicU64,
    logit_comput: AtomicU64,
    eval: AtomicU64,
    cache_hits: AtomicU64,
    evaluations: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub feat_select: u64,
    pub logit_comput: u64,
    pub eval: u64,
    pub cache_hits: u64,
    pub evaluations: u64,
}

impl ServiceStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            feat_select: self.feat_select.load(Ordering::SeqCst),
            logit_comput: self.logit_comput.load(Ordering::SeqCst),
            eval: self.eval.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            evaluations: self.evaluations.load(Ordering::SeqCst),
        }
    }
}

struct Slot {
    client: RwLock<Arc<dyn WorkerClient>>,
    process: Mutex<Option<Child>>,
    state: Mutex<WorkerState>,
    generation: AtomicU64,
}

impl Slot {
    fn client(&self) -> Arc<dyn WorkerClient> {
        Arc::clone(&self.client.read().unwrap())
    }

    fn pid(&self) -> Option<u32> {
        self.process.lock().unwrap().as_ref().map(Child::id)
    }

    fn process_exited(&self) -> bool {
        match self.process.lock().unwrap().as_mut() {
            Some(child) => !matches!(child.try_wait(), Ok(None)),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealReport {
    pub probed: usize,
    /// Slots whose worker was replaced.
    pub replaced: Vec<usize>,
    /// Suspect slots that passed the probe and were returned to service.
    pub restored: Vec<usize>,
    pub spawn_failures: Vec<(usize, String)>,
}

impl HealReport {
    pub fn is_empty(&self) -> bool {
        self.replaced.is_empty() && self.restored.is_empty() && self.spawn_failures.is_empty()
    }
}

type Outcome = Result<f64, FabricError>;

pub struct Fabric {
    slots: Vec<Slot>,
    free: Mutex<VecDeque<usize>>,
    free_cv: Condvar,
    launcher: Arc<dyn WorkerLauncher>,
    registry: RwLock<Vec<(String, DatasetSource)>>,
    cache: Mutex<HashMap<String, Outcome>>,
    stats: ServiceStats,
    config: FabricConfig,
    heal_lock: Mutex<()>,
}

impl std::fmt::Debug for Fabric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fabric")
            .field("workers", &self.slots.len())
            .field("backend", &self.launcher.kind())
            .finish_non_exhaustive()
    }
}

impl Drop for Fabric {
    fn drop(&mut self) {
        for slot in &self.slots {
            if let Some(mut child) = slot.process.lock().unwrap().take() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

impl Fabric {
    pub fn start(launcher: Arc<dyn WorkerLauncher>, config: FabricConfig) -> Result<Self, SpawnFailure> {
        if config.workers == 0 {
            return Err(SpawnFailure("worker count must be positive".into()));
        }
        let attempts: Vec<Result<LaunchedWorker, SpawnFailure>> = thread::scope(|s| {
            let handles: Vec<_> = (0..config.workers).map(|_| s.spawn(|| launcher.launch())).collect();
            handles.into_iter().map(|h| h.join().expect("launcher panicked")).collect()
        });
        if let Some(Err(e)) = attempts.iter().find(|a| a.is_err()) {
            let e = e.clone();
            for mut w in attempts.into_iter().flatten() {
                if let Some(child) = w.process.as_mut() {
                    let _ = child.kill();
                    let _ = child.wait();
                }
            }
            return Err(e);
        }
        let launched: Vec<LaunchedWorker> = attempts.into_iter().flatten().collect();
        let slots = launched
            .into_iter()
            .map(|w| Slot {
                client: RwLock::new(w.client),
                process: Mutex::new(w.process),
                state: Mutex::new(WorkerState::Healthy),
                generation: AtomicU64::new(0),
            })
            .collect::<Vec<_>>();
        let free = (0..slots.len()).collect();
        info!(workers = slots.len(), backend = launcher.kind(), "fabric started");
        Ok(Self {
            slots,
            free: Mutex::new(free),
            free_cv: Condvar::new(),
            launcher,
            registry: RwLock::new(Vec::new()),
            cache: Mutex::new(HashMap::new()),
            stats: ServiceStats::default(),
            config,
            heal_lock: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &FabricConfig {
        &self.config
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn size(&self) -> usize {
        self.slots.len()
    }

    pub fn states(&self) -> Vec<WorkerState> {
        self.slots.iter().map(|s| *s.state.lock().unwrap()).collect()
    }

    pub fn pids(&self) -> Vec<Option<u32>> {
        self.slots.iter().map(Slot::pid).collect()
    }

    /// Healthy workers whose process (if any) is still running.
    pub fn live_workers(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| *s.state.lock().unwrap() == WorkerState::Healthy && !s.process_exited())
            .count()
    }

    /// Registers a dataset on every worker (and on replacements later).
    pub fn register(&self, source: DatasetSource) -> Result<String, FabricError> {
        let mut id = None;
        for (i, slot) in self.slots.iter().enumerate() {
            match slot.client().register(&source) {
                Ok(got) => {
                    if let Some(prev) = &id {
                        if prev != &got {
                            return Err(FabricError::Infrastructure(format!(
                                "worker {i} assigned id {got}, expected {prev}"
                            )));
                        }
                    }
                    id = Some(got);
                }
                Err(e) if e.kind == ErrorKind::WorkerCrash => {
                    warn!(worker = i, error = %e, "registration skipped on unreachable worker");
                }
                Err(e) => return Err(FabricError::Infrastructure(e.to_string())),
            }
        }
        let id = id.ok_or_else(|| FabricError::Infrastructure("no worker accepted the dataset".into()))?;
        let mut reg = self.registry.write().unwrap();
        if !reg.iter().any(|(known, _)| known == &id) {
            reg.push((id.clone(), source));
        }
        Ok(id)
    }

    fn acquire(&self) -> Result<(usize, u64), FabricError> {
        let deadline = Instant::now() + self.config.acquire_timeout;
        let mut free = self.free.lock().unwrap();
        loop {
            if let Some(id) = free.pop_front() {
                return Ok((id, self.slots[id].generation.load(Ordering::SeqCst)));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(FabricError::Infrastructure("no worker became free in time".into()));
            }
            free = self.free_cv.wait_timeout(free, left).unwrap().0;
        }
    }

    fn release(&self, id: usize) {
        self.free.lock().unwrap().push_back(id);
        self.free_cv.notify_one();
    }

    /// Takes a slot out of rotation until the monitor has dealt with it,
    /// unless it was replaced while the failing request was in flight.
    fn withhold(&self, id: usize, generation: u64, state: WorkerState) {
        let mut st = self.slots[id].state.lock().unwrap();
        if self.slots[id].generation.load(Ordering::SeqCst) != generation {
            drop(st);
            self.release(id);
            return;
        }
        *st = state;
    }

    /// Runs `f` on a free worker, retrying on another worker after crashes.
    pub fn with_worker<T>(
        &self,
        mut f: impl FnMut(&dyn WorkerClient, Duration) -> Result<T, ServiceError>,
    ) -> Result<T, FabricError> {
        let mut crashes = 0;
        loop {
            let (id, generation) = self.acquire()?;
            let client = self.slots[id].client();
            match f(client.as_ref(), self.config.call_timeout) {
                Ok(v) => {
                    self.release(id);
                    return Ok(v);
                }
                Err(e) => match e.kind {
                    ErrorKind::WorkerCrash => {
                        warn!(worker = id, error = %e, "worker crashed");
                        self.withhold(id, generation, WorkerState::Dead);
                        crashes += 1;
                        if crashes > self.config.crash_retries {
                            return Err(FabricError::Infrastructure(e.to_string()));
                        }
                    }
                    ErrorKind::Timeout => {
                        warn!(worker = id, "request timed out; worker suspect");
                        if self.slots[id].process.lock().unwrap().is_some() {
                            self.withhold(id, generation, WorkerState::Suspect);
                        } else {
                            // in-process work is cancelled cooperatively
                            self.release(id);
                        }
                        return Err(FabricError::Candidate(e));
                    }
                    k if k.is_candidate_fault() => {
                        self.release(id);
                        return Err(FabricError::Candidate(e));
                    }
                    _ => {
                        self.release(id);
                        return Err(FabricError::Infrastructure(e.to_string()));
                    }
                },
            }
        }
    }

    /// Channel indices chosen by `code` on one few-shot draw.
    pub fn select(&self, task: &HoldoutTask, code: &str, hp: &HyperParams) -> Result<Vec<usize>, FabricError> {
        let req = FeatSelectRequest {
            dataset_id: task.dataset_id.clone(),
            shots: task.shots,
            seed: task.seed,
            code: code.to_string(),
            w0: hp.w0,
            w1: hp.w1,
            topk: hp.topk,
        };
        self.with_worker(|w, dl| {
            self.stats.feat_select.fetch_add(1, Ordering::SeqCst);
            w.feat_select(&req, dl)
        })
    }

    /// Accuracy of `code` on `split`, computing logits and scoring them on
    /// the same worker. `eval_dataset_id` scores another dataset's split.
    pub fn score(
        &self,
        task: &HoldoutTask,
        code: &str,
        indices: Option<&[usize]>,
        hp: &HyperParams,
        split: Split,
        eval_dataset_id: Option<&str>,
    ) -> Result<f64, FabricError> {
        let req = LogitRequest {
            dataset_id: task.dataset_id.clone(),
            shots: task.shots,
            seed: task.seed,
            split,
            code: code.to_string(),
            indices: indices.map(<[usize]>::to_vec),
            alpha0: hp.alpha0,
            alpha1: hp.alpha1,
            alpha2: hp.alpha2,
            eval_dataset_id: eval_dataset_id.map(str::to_string),
        };
        self.with_worker(|w, dl| {
            self.stats.logit_comput.fetch_add(1, Ordering::SeqCst);
            let handle = w.logit_comput(&req, dl)?;
            self.stats.eval.fetch_add(1, Ordering::SeqCst);
            w.eval(&handle, dl)
        })
    }

    fn evaluate_uncached(&self, selection: Option<&str>, logits: &str, tasks: &[HoldoutTask]) -> Outcome {
        if tasks.is_empty() {
            return Err(FabricError::Infrastructure("no holdout tasks".into()));
        }
        let mut accs = Vec::with_capacity(tasks.len());
        for task in tasks {
            let grid = hyper_grid(task.d);
            let indices = match selection {
                Some(code) => Some(self.select(task, code, &grid[0])?),
                None => None,
            };
            let mut best = f64::NEG_INFINITY;
            for theta in &grid {
                let acc = self.score(task, logits, indices.as_deref(), theta, Split::Test, None)?;
                if acc > best {
                    best = acc;
                }
            }
            accs.push(best);
        }
        Ok(fitness_from_accuracies(&accs))
    }

    /// Fitness of a (selection, logits) code pair through the services.
    ///
    /// Results, including candidate failures, are memoized on the code pair and
    /// task set; infrastructure failures are not.
    pub fn evaluate(&self, selection: Option<&str>, logits: &str, tasks: &[HoldoutTask]) -> Outcome {
        let key = memo_key(selection, logits, tasks);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
            return hit.clone();
        }
        self.stats.evaluations.fetch_add(1, Ordering::SeqCst);
        let out = self.evaluate_uncached(selection, logits, tasks);
        if !matches!(out, Err(FabricError::Infrastructure(_))) {
            self.cache.lock().unwrap().insert(key, out.clone());
        }
        out
    }

    /// Evaluates several code pairs concurrently; results keep input order.
    pub fn evaluate_many(&self, jobs: &[(Option<String>, String)], tasks: &[HoldoutTask]) -> Vec<Outcome> {
        let keys: Vec<String> = jobs
            .iter()
            .map(|(s, l)| memo_key(s.as_deref(), l, tasks))
            .collect();
        let mut first_of: HashMap<&str, usize> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            first_of.entry(k.as_str()).or_insert(i);
        }
        let mut unique: Vec<usize> = first_of.values().copied().collect();
        unique.sort_unstable();
        let results: HashMap<usize, Outcome> = thread::scope(|s| {
            let handles: Vec<_> = unique
                .iter()
                .map(|&i| {
                    let (sel, lg) = &jobs[i];
                    (i, s.spawn(move || self.evaluate(sel.as_deref(), lg, tasks)))
                })
                .collect();
            handles
                .into_iter()
                .map(|(i, h)| (i, h.join().expect("evaluation thread panicked")))
                .collect()
        });
        keys.iter()
            .enumerate()
            .map(|(i, k)| {
                let owner = first_of[k.as_str()];
                if owner != i {
                    // duplicate inside the batch: served like a cache hit
                    self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
                }
                results[&owner].clone()
            })
            .collect()
    }

    fn probe(&self, client: &dyn WorkerClient) -> Result<(), ServiceError> {
        let dl = self.config.probe_deadline;
        let started = Instant::now();
        let left = || dl.saturating_sub(started.elapsed()).max(Duration::from_millis(1));
        client.health(left())?;
        let d = probe_dataset().dim();
        let indices = client.feat_select(&probe_select_request(d), left())?;
        let handle = client.logit_comput(&probe_logit_request(indices), left())?;
        let acc = client.eval(&handle, left())?;
        if acc != 1.0 {
            return Err(ServiceError::new(ErrorKind::WorkerCrash, format!("probe accuracy {acc}")));
        }
        Ok(())
    }

    fn replace(&self, id: usize) -> Result<(), SpawnFailure> {
        let slot = &self.slots[id];
        if let Some(mut child) = slot.process.lock().unwrap().take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        let launched = self.launcher.launch()?;
        let registry = self.registry.read().unwrap().clone();
        for (known, source) in &registry {
            match launched.client.register(source) {
                Ok(got) if &got == known => {}
                Ok(got) => return Err(SpawnFailure(format!("re-registration gave {got}, expected {known}"))),
                Err(e) => return Err(SpawnFailure(format!("re-registration failed: {e}"))),
            }
        }
        *slot.process.lock().unwrap() = launched.process;
        *slot.client.write().unwrap() = launched.client;
        slot.generation.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    /// Probes every worker with known-good requests to all three services and
    /// replaces the ones that fail.
    pub fn probe_and_heal(&self) -> HealReport {
        let _one_at_a_time = self.heal_lock.lock().unwrap();
        let verdicts: Vec<(usize, WorkerState, bool)> = thread::scope(|s| {
            let handles: Vec<_> = self
                .slots
                .iter()
                .enumerate()
                .map(|(i, slot)| {
                    s.spawn(move || {
                        let state = *slot.state.lock().unwrap();
                        let ok = !slot.process_exited() && self.probe(slot.client().as_ref()).is_ok();
                        (i, state, ok)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("probe panicked")).collect()
        });
        let mut report = HealReport { probed: verdicts.len(), ..Default::default() };
        let failed: Vec<(usize, WorkerState)> = verdicts
            .iter()
            .filter_map(|&(i, state, ok)| {
                if ok {
                    if state != WorkerState::Healthy {
                        *self.slots[i].state.lock().unwrap() = WorkerState::Healthy;
                        self.release(i);
                        report.restored.push(i);
                    }
                    None
                } else {
                    Some((i, state))
                }
            })
            .collect();
        let outcomes: Vec<(usize, WorkerState, Result<(), SpawnFailure>)> = thread::scope(|s| {
            let handles: Vec<_> = failed
                .iter()
                .map(|&(i, state)| s.spawn(move || (i, state, self.replace(i))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("respawn panicked")).collect()
        });
        for (i, state, result) in outcomes {
            match result {
                Ok(()) => {
                    info!(worker = i, "worker replaced");
                    *self.slots[i].state.lock().unwrap() = WorkerState::Healthy;
                    if state != WorkerState::Healthy {
                        self.release(i);
                    }
                    report.replaced.push(i);
                }
                Err(e) => {
                    warn!(worker = i, error = %e, "respawn failed");
                    // a healthy-marked slot is still queued and is withdrawn on its next failure
                    if state != WorkerState::Healthy {
                        *self.slots[i].state.lock().unwrap() = WorkerState::Dead;
                    }
                    report.spawn_failures.push((i, e.0));
                }
            }
        }
        report
    }
}

/// Digest of the evaluated code pair and the task set.
pub fn memo_key(selection: Option<&str>, logits: &str, tasks: &[HoldoutTask]) -> String {
    let mut h = Sha256::new();
    match selection {
        Some(code) => {
            h.update(b"S");
            h.update((code.len() as u64).to_le_bytes());
            h.update(code.as_bytes());
        }
        None => h.update(b"N"),
    }
    h.update((logits.len() as u64).to_le_bytes());
    h.update(logits.as_bytes());
    for t in tasks {
        h.update((t.dataset_id.len() as u64).to_le_bytes());
        h.update(t.dataset_id.as_bytes());
        h.update((t.shots as u64).to_le_bytes());
        h.update(t.seed.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Runs [`Fabric::probe_and_heal`] on a fixed interval until dropped.
pub struct Monitor {
    stop: Arc<(Mutex<bool>, Condvar)>,
    reports: Arc<Mutex<Vec<HealReport>>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Monitor {
    pub fn spawn(fabric: Arc<Fabric>, interval: Duration) -> Self {
        let stop = Arc::new((Mutex::new(false), Condvar::new()));
        let reports = Arc::new(Mutex::new(Vec::new()));
        let (s, r) = (Arc::clone(&stop), Arc::clone(&reports));
        let handle = thread::spawn(move || loop {
            let (lock, cv) = &*s;
            let stopped = cv
                .wait_timeout_while(lock.lock().unwrap(), interval, |stop| !*stop)
                .unwrap()
                .0;
            if *stopped {
                return;
            }
            drop(stopped);
            let report = fabric.probe_and_heal();
            if !report.is_empty() {
                info!(?report, "heal cycle");
            }
            r.lock().unwrap().push(report);
        });
        Self { stop, reports, handle: Some(handle) }
    }

    pub fn reports(&self) -> Vec<HealReport> {
        self.reports.lock().unwrap().clone()
    }
}

impl Drop for Monitor {
    fn drop(&mut self) {
        let (lock, cv) = &*self.stop;
        *lock.lock().unwrap() = true;
        cv.notify_all();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
