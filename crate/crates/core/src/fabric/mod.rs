//! Candidate evaluation as services: the wire protocol, the native backend,
//! worker clients and processes, dispatch with memoization, and healing.

mod audit;
mod directive;
mod executor;
mod launcher;
mod pool;
mod protocol;
mod server;
mod worker;

pub use audit::{AccessLog, LabelAccess};
pub use directive::{parse_logits, parse_select, LogitsDirective, LogitsKind, SelectDirective, DIRECTIVE_PREFIX};
pub use executor::{
    probe_dataset, probe_logit_request, probe_select_request, NativeExecutor, DEFAULT_HANDLE_TTL,
    PROBE_DATASET_ID,
};
pub use launcher::{LaunchedWorker, NativeLauncher, ProcessLauncher, SpawnFailure, WorkerLauncher};
pub use pool::{
    memo_key, Fabric, FabricConfig, FabricError, HealReport, HoldoutTask, Monitor, StatsSnapshot,
    WorkerState,
};
pub use protocol::*;
pub use server::{router, serve, ServeOptions, LISTENING_PREFIX};
pub use worker::{DatasetSource, LocalWorker, RemoteWorker, WorkerClient};
