//! Per-report monitoring: current alerts from classifications, predicted alerts from
//! forecasts, and trend direction for indices without alert values.

use serde::{Deserialize, Serialize};

use crate::ids::{ActorId, Tick};
use crate::indices::{alert_region, IndexClass, IndexName, IndexReport, Thresholds};

use super::forecast::{forecast_index, is_declining, Predictor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Forecast horizon H in ticks.
    pub horizon: u64,
    /// Number of most recent periods used for trends and forecasts.
    pub window: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { horizon: 3, window: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Watch,
    Alert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    Current,
    Predicted,
}

pub const CONTAGION_INDEX: &str = "contagion_watch";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub stakeholder_id: ActorId,
    pub index_name: String,
    pub kind: AlertKind,
    pub tick_raised: Tick,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted_crossing_tick: Option<Tick>,
    pub severity: Severity,
    /// Alerting counterparty, for contagion alerts.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterparty: Option<ActorId>,
}

impl Alert {
    fn new(stakeholder: &ActorId, index: &str, kind: AlertKind, tick: Tick, severity: Severity) -> Self {
        let k = match kind {
            AlertKind::Current => "current",
            AlertKind::Predicted => "predicted",
        };
        Self {
            alert_id: format!("{stakeholder}:{index}:{tick}:{k}"),
            stakeholder_id: stakeholder.clone(),
            index_name: index.to_string(),
            kind,
            tick_raised: tick,
            predicted_crossing_tick: None,
            severity,
            counterparty: None,
        }
    }

    /// Watch raised on `stakeholder` for its exposure to the alerting `counterparty`.
    pub fn contagion(stakeholder: &ActorId, counterparty: &ActorId, tick: Tick) -> Self {
        let mut a = Self::new(stakeholder, CONTAGION_INDEX, AlertKind::Current, tick, Severity::Watch);
        a.alert_id = format!("{stakeholder}:{CONTAGION_INDEX}:{tick}:{counterparty}");
        a.counterparty = Some(counterparty.clone());
        a
    }

    pub fn index(&self) -> Option<IndexName> {
        self.index_name.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MonitorOutput {
    pub alerts: Vec<Alert>,
    /// Indices without alert values whose fitted slope over the window is negative.
    pub declining: Vec<IndexName>,
}

/// Monitor the last report of `history` (oldest first), using earlier reports for trends.
pub fn monitor_report(
    history: &[&IndexReport],
    cfg: &MonitorConfig,
    th: &Thresholds,
    predictor: &dyn Predictor,
) -> MonitorOutput {
    let mut out = MonitorOutput::default();
    let Some(current) = history.last() else {
        return out;
    };
    let stakeholder = &current.stakeholder_id;
    let tick = current.period_tick;
    let window = &history[history.len().saturating_sub(cfg.window.max(1))..];
    for name in IndexName::ALL {
        let class = current.class(name);
        match class {
            IndexClass::Alert => {
                out.alerts.push(Alert::new(stakeholder, name.as_str(), AlertKind::Current, tick, Severity::Alert))
            }
            IndexClass::Watch => {
                out.alerts.push(Alert::new(stakeholder, name.as_str(), AlertKind::Current, tick, Severity::Watch))
            }
            _ => {}
        }
        if class == IndexClass::Undefined {
            continue;
        }
        let series: Vec<_> = window.iter().filter_map(|r| r.value(name).map(|v| (r.period_tick, *v))).collect();
        let region = alert_region(name, th);
        let Ok(forecast) = forecast_index(predictor, &series, cfg.horizon, region.as_ref()) else {
            continue;
        };
        if class != IndexClass::Alert {
            if let Some(crossing) = forecast.crossing {
                let mut a = Alert::new(stakeholder, name.as_str(), AlertKind::Predicted, tick, Severity::Alert);
                a.predicted_crossing_tick = Some(crossing);
                out.alerts.push(a);
            }
        }
        if region.is_none() && is_declining(&forecast.slope) {
            out.declining.push(name);
        }
    }
    out
}
