//! HTTP service for elicitation sessions and sampling jobs.
//!
//! Sessions and job records are flat JSON files under the data directory;
//! sampling runs on a fixed pool of worker threads, off the request path.

pub mod api;
pub mod error;
pub mod jobs;
pub mod schema;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{router, AppState};
pub use error::ApiError;
pub use store::Store;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub port: u16,
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("lap-data"),
            port: 8080,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2),
        }
    }
}

impl ServiceConfig {
    /// Reads `LAP_DATA_DIR`, `LAP_PORT` and `LAP_WORKERS`, falling back to defaults.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut c = Self::default();
        if let Some(d) = get("LAP_DATA_DIR") {
            c.data_dir = PathBuf::from(d);
        }
        if let Some(p) = get("LAP_PORT") {
            c.port = p.parse().map_err(|_| format!("LAP_PORT: `{p}` is not a port number"))?;
        }
        if let Some(w) = get("LAP_WORKERS") {
            c.workers = w.parse().ok().filter(|&n: &usize| n > 0).ok_or_else(|| format!("LAP_WORKERS: `{w}` is not a positive integer"))?;
        }
        Ok(c)
    }
}

/// Opens the store, loads existing sessions and builds the router.
pub fn app(config: &ServiceConfig) -> std::io::Result<axum::Router> {
    let state = AppState::new(Store::open(&config.data_dir)?, config.workers);
    for e in state.preload() {
        tracing::warn!("skipping session: {e}");
    }
    Ok(router(state))
}

pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let app = app(&config)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
