use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::audit::AccessLog;
use super::executor::NativeExecutor;
use super::server::LISTENING_PREFIX;
use super::worker::{LocalWorker, RemoteWorker, WorkerClient};

#[derive(Debug, Clone, Error)]
#[error("worker spawn failed: {0}")]
pub struct SpawnFailure(pub String);

pub struct LaunchedWorker {
    pub client: Arc<dyn WorkerClient>,
    pub process: Option<Child>,
}

impl std::fmt::Debug for LaunchedWorker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LaunchedWorker")
            .field("pid", &self.process.as_ref().map(Child::id))
            .finish_non_exhaustive()
    }
}

pub trait WorkerLauncher: Send + Sync {
    fn launch(&self) -> Result<LaunchedWorker, SpawnFailure>;
    fn kind(&self) -> &'static str;
}

/// In-process workers, each with its own executor state.
#[derive(Debug, Default, Clone)]
pub struct NativeLauncher {
    audit: Option<Arc<AccessLog>>,
}

impl NativeLauncher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every launched executor reports label reads to `log`.
    pub fn with_audit(log: Arc<AccessLog>) -> Self {
        Self { audit: Some(log) }
    }
}

impl WorkerLauncher for NativeLauncher {
    fn launch(&self) -> Result<LaunchedWorker, SpawnFailure> {
        let mut ex = NativeExecutor::new();
        if let Some(log) = &self.audit {
            ex = ex.with_audit(Arc::clone(log));
        }
        Ok(LaunchedWorker {
            client: Arc::new(LocalWorker::new(Arc::new(ex))),
            process: None,
        })
    }

    fn kind(&self) -> &'static str {
        "native"
    }
}

/// Starts worker processes with `program args... --port 0` and waits for the
/// announced address.
#[derive(Debug, Clone)]
pub struct ProcessLauncher {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub spawn_timeout: Duration,
}

impl ProcessLauncher {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            spawn_timeout: Duration::from_secs(15),
        }
    }
}

impl WorkerLauncher for ProcessLauncher {
    fn launch(&self) -> Result<LaunchedWorker, SpawnFailure> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .args(["--port", "0"])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SpawnFailure(format!("{}: {e}", self.program.display())))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            let mut line = String::new();
            let _ = tx.send(reader.read_line(&mut line).map(|_| line));
            // keep draining so the child never blocks on a full pipe
            let mut sink = String::new();
            while matches!(reader.read_line(&mut sink), Ok(n) if n > 0) {
                sink.clear();
            }
        });
        let started = Instant::now();
        let fail = |child: &mut Child, msg: String| {
            let _ = child.kill();
            let _ = child.wait();
            SpawnFailure(msg)
        };
        let line = match rx.recv_timeout(self.spawn_timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(fail(&mut child, format!("reading worker stdout: {e}"))),
            Err(_) => return Err(fail(&mut child, format!("no address within {:?}", self.spawn_timeout))),
        };
        let Some(url) = line.trim().strip_prefix(LISTENING_PREFIX) else {
            return Err(fail(&mut child, format!("unexpected worker banner `{}`", line.trim())));
        };
        let client = RemoteWorker::new(url).map_err(|e| SpawnFailure(e.to_string()))?;
        loop {
            let left = self.spawn_timeout.saturating_sub(started.elapsed());
            if left.is_zero() {
                return Err(fail(&mut child, "worker never became healthy".into()));
            }
            if client.health(left.min(Duration::from_secs(2))).is_ok() {
                break;
            }
            thread::sleep(Duration::from_millis(20));
        }
        Ok(LaunchedWorker {
            client: Arc::new(client),
            process: Some(child),
        })
    }

    fn kind(&self) -> &'static str {
        "process"
    }
}
