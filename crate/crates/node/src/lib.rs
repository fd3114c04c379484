//! Network deployment of the platform: one HTTP daemon per role, blocking
//! HTTP clients that implement the core service traits, and the worker
//! loop. Each daemon owns exactly the state of its role; everything else it
//! learns over the wire.

pub mod custodian;
pub mod error;
mod extract;
pub mod gateway;
pub mod orchestrator;
pub mod remote;
pub mod storage;
pub mod worker;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::Router;
use morpheo_core::service::ServiceError;

pub use error::ApiError;

/// Runs `f` on the blocking pool with the role state locked. Handlers may
/// make outbound HTTP calls, so none of this runs on the async executor.
pub(crate) async fn locked<S, T, F>(state: &Arc<Mutex<S>>, f: F) -> Result<T, ApiError>
where
    S: Send + 'static,
    T: Send + 'static,
    F: FnOnce(&mut S) -> Result<T, ServiceError> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = state.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError(ServiceError::Unavailable(format!("handler panicked: {e}"))))?
    .map_err(ApiError)
}

/// Serves `router` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}

/// Binds `addr` and serves `router` from a dedicated runtime on a background
/// thread. Returns the bound address (useful with port 0).
pub fn spawn_server(addr: SocketAddr, router: Router) -> std::io::Result<SocketAddr> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let bound = std_listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener registers");
            let _ = serve(listener, router).await;
        })
    });
    Ok(bound)
}

/// Blocks the calling thread serving `router` on `addr`.
pub fn run_server(addr: SocketAddr, router: Router) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        serve(listener, router).await?;
        Ok(())
    })
}

pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}
