//! HTTP front end of a worker process.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::Mutex;

use super::executor::NativeExecutor;
use super::protocol::{
    ErrorKind, EvalRequest, EvalResponse, FeatSelectRequest, FeatSelectResponse, HealthResponse,
    LogitRequest, LogitResponse, RegisterRequest, RegisterResponse, Reply, ServiceError,
};

/// Printed on stdout once the listener is bound; launchers parse it.
pub const LISTENING_PREFIX: &str = "listening on ";

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    /// Server-side cap per compute request. `None` leaves deadlines to the client.
    pub max_duration: Option<Duration>,
}

#[derive(Clone)]
struct AppState {
    executor: Arc<NativeExecutor>,
    // compute services run one at a time per worker
    busy: Arc<Mutex<()>>,
    max_duration: Option<Duration>,
}

pub fn router(executor: Arc<NativeExecutor>, max_duration: Option<Duration>) -> Router {
    let state = AppState {
        executor,
        busy: Arc::new(Mutex::new(())),
        max_duration,
    };
    Router::new()
        .route("/register_dataset", post(register))
        .route("/feat_select", post(feat_select))
        .route("/logit_comput", post(logit_comput))
        .route("/eval", post(eval))
        .route("/health", get(health))
        .with_state(state)
}

/// Binds, announces the address on stdout, and serves until the process ends.
pub fn serve(executor: Arc<NativeExecutor>, opts: ServeOptions) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(opts.addr).await?;
        let bound = listener.local_addr()?;
        {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{LISTENING_PREFIX}http://{bound}")?;
            out.flush()?;
        }
        tracing::info!(%bound, "worker listening");
        axum::serve(listener, router(executor, opts.max_duration)).await
    })
}

async fn run_serialized<T: Send + 'static>(
    st: &AppState,
    f: impl FnOnce(&NativeExecutor, &AtomicBool) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    let guard = Arc::clone(&st.busy).lock_owned().await;
    let ex = Arc::clone(&st.executor);
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    let job = tokio::task::spawn_blocking(move || {
        let _guard = guard;
        f(&ex, &flag)
    });
    let joined = match st.max_duration {
        Some(limit) => match tokio::time::timeout(limit, job).await {
            Ok(j) => j,
            Err(_) => {
                cancel.store(true, Ordering::Relaxed);
                return Err(ServiceError::new(
                    ErrorKind::Timeout,
                    format!("exceeded worker limit of {limit:?}"),
                ));
            }
        },
        None => job.await,
    };
    joined.unwrap_or_else(|e| Err(ServiceError::new(ErrorKind::CandidateError, format!("candidate panicked: {e}"))))
}

async fn register(State(st): State<AppState>, Json(req): Json<RegisterRequest>) -> Json<Reply<RegisterResponse>> {
    let ex = Arc::clone(&st.executor);
    let r = tokio::task::spawn_blocking(move || ex.register_path(&req.path))
        .await
        .unwrap_or_else(|e| Err(ServiceError::new(ErrorKind::BadRequest, e.to_string())));
    Json(r.map(|dataset_id| RegisterResponse { dataset_id }).into())
}

async fn feat_select(
    State(st): State<AppState>,
    Json(req): Json<FeatSelectRequest>,
) -> Json<Reply<FeatSelectResponse>> {
    let r = run_serialized(&st, move |ex, c| ex.feat_select(&req, c)).await;
    Json(r.map(|indices| FeatSelectResponse { indices }).into())
}

async fn logit_comput(State(st): State<AppState>, Json(req): Json<LogitRequest>) -> Json<Reply<LogitResponse>> {
    let r = run_serialized(&st, move |ex, c| ex.logit_comput(&req, c)).await;
    Json(r.map(|handle| LogitResponse { handle }).into())
}

async fn eval(State(st): State<AppState>, Json(req): Json<EvalRequest>) -> Json<Reply<EvalResponse>> {
    let r = run_serialized(&st, move |ex, _| ex.eval(&req.handle)).await;
    Json(r.map(|accuracy| EvalResponse { accuracy }).into())
}

async fn health() -> Json<HealthResponse> {
    Json(HealthResponse { status: "ok".into() })
}
