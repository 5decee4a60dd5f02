//! Financial health engine: monitoring, forecasting, risk scoring, recommendations
//! and what-if forks.

pub mod forecast;
pub mod monitor;
pub mod recommend;
pub mod risk;
pub mod whatif;

use thiserror::Error;

use crate::ids::ActorId;

pub use forecast::{forecast_index, Forecast, LinearTrend, OlsPredictor, Predictor, TrendModel};
pub use monitor::{monitor_report, Alert, AlertKind, MonitorConfig, MonitorOutput, Severity};
pub use recommend::{recommend_services, services_for, Recommendation, Service};
pub use risk::{score_risk, RiskComponents, RiskScore, RiskWeights};
pub use whatif::{simulate_whatif, WhatIf};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HealthError {
    #[error("at least two points at distinct ticks are required")]
    InsufficientHistory,
    #[error("unknown stakeholder {0}")]
    UnknownStakeholder(ActorId),
    #[error("invalid hypothetical event {index}: {reason}")]
    InvalidHypothetical { index: usize, reason: String },
}
