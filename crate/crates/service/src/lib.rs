//! HTTP API over the platform.
//!
//! All mutations go through one writer task (see [`writer`]); each is signed for the
//! authenticated principal, committed in its own block, and answered after the commit.
//! Reads are served from the latest committed [`writer::View`].
//!
//! Authentication is a bearer token mapped to a network member. Errors are JSON
//! `{"error", "message"}` with 401 (no or unknown token), 403 (capability exceeded),
//! 404 (unknown id), 409 (contract precondition failed; `error` is the contract error
//! code) and 422 (malformed body or query).

pub mod api;
pub mod auth;
pub mod error;
pub mod writer;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use scftwin_core::config::ServiceConfig;
use scftwin_core::ids::ActorId;
use scftwin_core::platform::{Platform, PlatformError};
use scftwin_core::store::{StoreError, SPEC_FILE};
use thiserror::Error;
use tokio::sync::{mpsc, watch};

pub use api::{permits, router, Capability, Endpoint, ENDPOINTS};
pub use error::ApiError;
pub use writer::{Committed, View};

#[derive(Clone)]
pub struct AppState {
    pub(crate) views: watch::Receiver<Arc<View>>,
    pub(crate) writer: mpsc::Sender<writer::Command>,
    pub(crate) tokens: Arc<BTreeMap<String, ActorId>>,
}

impl AppState {
    /// Latest committed view.
    pub fn view(&self) -> Arc<View> {
        self.views.borrow().clone()
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("token principal {0} is not a member of the platform in the data directory")]
    UnknownPrincipal(ActorId),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Start the writer for `platform` and build the application. Must be called inside a
/// Tokio runtime.
pub fn app(platform: Platform, tokens: BTreeMap<String, ActorId>) -> Result<axum::Router, ServeError> {
    for who in tokens.values() {
        if platform.ledger().network().get(who).is_none() {
            return Err(ServeError::UnknownPrincipal(who.clone()));
        }
    }
    let (writer, views) = writer::spawn(platform);
    Ok(router(AppState { views, writer, tokens: Arc::new(tokens) }))
}

/// Open the platform in `cfg.data_dir`, creating it from `cfg.platform` if absent.
pub fn open_platform(cfg: &ServiceConfig) -> Result<Platform, PlatformError> {
    if cfg.data_dir.join(SPEC_FILE).exists() {
        Platform::open(&cfg.data_dir)
    } else {
        std::fs::create_dir_all(&cfg.data_dir).map_err(|e| StoreError::Io(e.to_string()))?;
        Platform::create(&cfg.data_dir, cfg.platform.clone())
    }
}

/// Run the service until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServeError> {
    let platform = open_platform(&cfg)?;
    let app = app(platform, cfg.tokens.clone())?;
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|source| ServeError::Bind { addr, source })?;
    let local: SocketAddr = listener.local_addr()?;
    eprintln!("listening on http://{local}");
    axum::serve(listener, app).await?;
    Ok(())
}
