//! The single writer. One blocking task owns the platform, turns each mutation into a
//! signed transaction, commits it in its own block and publishes a fresh read view.

use std::sync::Arc;

use scftwin_core::contracts::Engine;
use scftwin_core::crypto::Hash;
use scftwin_core::ids::{ActorId, Tick};
use scftwin_core::ledger::{LedgerBlock, Network, Payload};
use scftwin_core::platform::{Derived, Platform, PlatformError};
use serde::Serialize;
use tokio::sync::{mpsc, oneshot, watch};

use crate::error::ApiError;

/// Committed state as seen by readers.
#[derive(Debug)]
pub struct View {
    pub engine: Engine,
    pub derived: Derived,
    pub network: Network,
    pub blocks: Vec<LedgerBlock>,
}

impl View {
    pub fn capture(p: &Platform) -> Self {
        Self {
            engine: p.engine().clone(),
            derived: p.derived().clone(),
            network: p.ledger().network().clone(),
            blocks: p.ledger().blocks().to_vec(),
        }
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Committed {
    pub tx_id: Hash,
    pub status: &'static str,
    pub height: u64,
    pub block_hash: Hash,
    pub tick: Tick,
}

pub struct Command {
    pub principal: ActorId,
    pub payload: Payload,
    pub timestamp: Option<Tick>,
    pub reply: oneshot::Sender<Result<Committed, ApiError>>,
}

pub fn spawn(platform: Platform) -> (mpsc::Sender<Command>, watch::Receiver<Arc<View>>) {
    let (tx, rx) = mpsc::channel(64);
    let (view_tx, view_rx) = watch::channel(Arc::new(View::capture(&platform)));
    tokio::task::spawn_blocking(move || run(platform, rx, view_tx));
    (tx, view_rx)
}

fn run(mut platform: Platform, mut rx: mpsc::Receiver<Command>, views: watch::Sender<Arc<View>>) {
    while let Some(cmd) = rx.blocking_recv() {
        let result = apply(&mut platform, cmd.principal, cmd.payload, cmd.timestamp);
        if result.is_ok() {
            views.send_replace(Arc::new(View::capture(&platform)));
        }
        let _ = cmd.reply.send(result);
    }
}

fn apply(p: &mut Platform, who: ActorId, payload: Payload, timestamp: Option<Tick>) -> Result<Committed, ApiError> {
    let tick = timestamp.unwrap_or_else(|| p.now());
    let tx_id = p.submit(&who, payload, tick).map_err(ApiError::from_platform)?;
    match p.commit() {
        Ok(Some(block)) => Ok(Committed {
            tx_id,
            status: "committed",
            height: block.height,
            block_hash: block.block_hash,
            tick: block.tick(),
        }),
        Ok(None) => Err(ApiError::internal("transaction was not committed")),
        Err(e) => Err(ApiError::from_platform(e)),
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        ApiError::from_platform(e)
    }
}
