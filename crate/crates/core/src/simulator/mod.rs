//! Deterministic scenario engine: stakeholders, trade flows, payment behaviour and silo
//! snapshots, driven through the platform one block per tick.

pub mod config;
pub mod drive;
pub mod generate;

use thiserror::Error;

use crate::platform::PlatformError;

pub use config::{PaymentBehavior, PolicyConfig, ScenarioConfig, TradeEdge, ValueRange};
pub use drive::{drive, DriveStats};
pub use generate::{generate, Script, ScriptEvent};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("tick {tick}: {source}")]
    Platform {
        tick: u64,
        #[source]
        source: PlatformError,
    },
}
