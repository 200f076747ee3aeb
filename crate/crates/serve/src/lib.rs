//! Read-only HTTP service over graph documents, similarity matrices,
//! community records and activation datasets.
//!
//! Endpoints:
//!
//! - `GET /api/presets`: preset names.
//! - `GET /api/graph?preset=&threshold=`: a preset's graph document, with
//!   edges optionally re-filtered at a higher threshold.
//! - `GET /api/feature/{layer}/{index}`: explanation, max activation,
//!   classification and top neighbors per measure (`cap=` limits them).
//! - `GET /api/communities?measure=&algo=&threshold=&min_size=&max_size=`.
//! - `GET /api/token-subgraph?dataset=&token=`.
//!
//! Errors are `{"error": "..."}` with a 4xx/5xx status.

mod api;
pub mod config;
mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{router, ApiError, ErrorBody, FeatureDetail, NeighborInfo, NeighborLists};
pub use config::{resolve_bind, DatasetConfig, PresetConfig, Recipe, ServeConfig, BIND_ENV, DEFAULT_BIND};
pub use state::{decorate, merge_decorations, AppState};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifacts:{}", .0.iter().map(|p| format!("\n  {}", p.display())).collect::<String>())]
    MissingArtifacts(Vec<PathBuf>),

    #[error("cannot load artifact {0}")]
    Artifact(String),

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serves `state` on `addr` until ctrl-c.
pub async fn serve(state: AppState, addr: &str) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: addr.to_owned(),
            source,
        })?;
    let local: SocketAddr = listener.local_addr()?;
    log::info!("serving on http://{local}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
