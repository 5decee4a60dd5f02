//! Mapping from triggering indices to financial services.
//!
//! | service                            | index family                 |
//! |------------------------------------|------------------------------|
//! | Receivables Discounting            | liquidity ratios             |
//! | Factoring                          | rotation of current assets   |
//! | Account Receivables Securitization | liquidity ratios             |
//! | Dynamic Discounting                | return of capital            |
//! | Inventory Financing                | warehouse turnover           |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{ActorId, Tick};
use crate::indices::IndexName;

use super::monitor::{Alert, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Service {
    #[serde(rename = "Account Receivables Securitization")]
    AccountReceivablesSecuritization,
    #[serde(rename = "Dynamic Discounting")]
    DynamicDiscounting,
    #[serde(rename = "Factoring")]
    Factoring,
    #[serde(rename = "Inventory Financing")]
    InventoryFinancing,
    #[serde(rename = "Receivables Discounting")]
    ReceivablesDiscounting,
}

impl Service {
    pub const ALL: [Service; 5] = [
        Service::AccountReceivablesSecuritization,
        Service::DynamicDiscounting,
        Service::Factoring,
        Service::InventoryFinancing,
        Service::ReceivablesDiscounting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Service::AccountReceivablesSecuritization => "Account Receivables Securitization",
            Service::DynamicDiscounting => "Dynamic Discounting",
            Service::Factoring => "Factoring",
            Service::InventoryFinancing => "Inventory Financing",
            Service::ReceivablesDiscounting => "Receivables Discounting",
        }
    }

    /// Indices whose family the service addresses.
    pub fn indices(self) -> &'static [IndexName] {
        match self {
            Service::AccountReceivablesSecuritization | Service::ReceivablesDiscounting => {
                &[IndexName::QuickRatio, IndexName::AvailabilityIndex]
            }
            Service::DynamicDiscounting => &[IndexName::ReturnOfCapital],
            Service::Factoring => &[IndexName::RotationOfCurrentAssets],
            Service::InventoryFinancing => &[IndexName::WarehouseTurnover],
        }
    }
}

/// Services for an index, sorted by name.
pub fn services_for(index: IndexName) -> Vec<Service> {
    let mut v: Vec<Service> = Service::ALL.into_iter().filter(|s| s.indices().contains(&index)).collect();
    v.sort_by_key(|s| s.name());
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub stakeholder_id: ActorId,
    pub tick: Tick,
    pub triggering_index: IndexName,
    pub severity: Severity,
    pub services: Vec<Service>,
    pub rationale: String,
}

/// One recommendation per triggering index. Alerts trigger at Alert severity (current or
/// predicted); `declining` indices trigger at Watch severity. Ordered by severity
/// (highest first), then by first service name.
pub fn recommend_services(
    stakeholder: &ActorId,
    tick: Tick,
    alerts: &[Alert],
    declining: &[IndexName],
) -> Vec<Recommendation> {
    let mut triggers: BTreeMap<IndexName, (Severity, String)> = BTreeMap::new();
    for a in alerts.iter().filter(|a| &a.stakeholder_id == stakeholder && a.severity == Severity::Alert) {
        let Some(index) = a.index() else { continue };
        if matches!(index, IndexName::DebtIndex | IndexName::SolvencyIndex) {
            continue;
        }
        let why = match a.predicted_crossing_tick {
            Some(t) => format!("{index} forecast to enter its alert region at tick {t}"),
            None => format!("{index} is in its alert region"),
        };
        triggers.entry(index).or_insert((Severity::Alert, why));
    }
    for &index in declining {
        if matches!(index, IndexName::RotationOfCurrentAssets | IndexName::WarehouseTurnover) {
            triggers
                .entry(index)
                .or_insert((Severity::Watch, format!("{index} is declining over the monitoring window")));
        }
    }
    let mut out: Vec<Recommendation> = triggers
        .into_iter()
        .map(|(index, (severity, rationale))| Recommendation {
            stakeholder_id: stakeholder.clone(),
            tick,
            triggering_index: index,
            severity,
            services: services_for(index),
            rationale,
        })
        .filter(|r| !r.services.is_empty())
        .collect();
    out.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then_with(|| a.services[0].name().cmp(b.services[0].name()))
            .then_with(|| a.triggering_index.cmp(&b.triggering_index))
    });
    out
}
