//! Counterparty risk score: a clamped weighted sum of default rate, late-payment rate
//! and the share of defined indices in Alert.

use serde::{Deserialize, Serialize};

use crate::contracts::{Engine, ReceivableStatus};
use crate::ids::{ActorId, Tick};
use crate::indices::{IndexClass, IndexReport};
use crate::rational::{ratio, Rational};

use super::HealthError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskWeights {
    #[serde(with = "crate::rational::serde_str")]
    pub default: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub late: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub alert: Rational,
    /// Score for a stakeholder with no matured receivables and no index history.
    #[serde(with = "crate::rational::serde_str")]
    pub neutral: Rational,
}

impl Default for RiskWeights {
    fn default() -> Self {
        Self { default: ratio(1, 2), late: ratio(3, 10), alert: ratio(1, 5), neutral: ratio(1, 2) }
    }
}

impl RiskWeights {
    pub fn validate(&self) -> Result<(), String> {
        let zero = ratio(0, 1);
        let one = ratio(1, 1);
        for (name, w) in [("default", self.default), ("late", self.late), ("alert", self.alert)] {
            if w < zero {
                return Err(format!("risk weight {name} must be non-negative"));
            }
        }
        if self.neutral < zero || self.neutral > one {
            return Err("neutral risk must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskComponents {
    #[serde(with = "crate::rational::serde_str")]
    pub default_rate: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub late_rate: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub alert_fraction: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskScore {
    pub stakeholder_id: ActorId,
    pub tick: Tick,
    #[serde(with = "crate::rational::serde_str")]
    pub value: Rational,
    pub components: RiskComponents,
    pub matured: u64,
    pub neutral: bool,
}

/// Counts feeding a score. `alerts`/`defined` come from the latest index report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RiskInputs {
    pub matured: u64,
    pub defaulted: u64,
    pub late: u64,
    pub report: Option<(u64, u64)>,
}

fn frac(n: u64, d: u64) -> Rational {
    if d == 0 {
        ratio(0, 1)
    } else {
        ratio(n as i128, d as i128)
    }
}

impl RiskInputs {
    pub fn score(&self, stakeholder: &ActorId, tick: Tick, w: &RiskWeights) -> RiskScore {
        let (alerts, defined) = self.report.unwrap_or((0, 0));
        let components = RiskComponents {
            default_rate: frac(self.defaulted, self.matured),
            late_rate: frac(self.late, self.matured),
            alert_fraction: frac(alerts, defined),
        };
        let neutral = self.matured == 0 && self.report.is_none();
        let value = if neutral {
            w.neutral
        } else {
            let raw = w.default * components.default_rate
                + w.late * components.late_rate
                + w.alert * components.alert_fraction;
            raw.clamp(ratio(0, 1), ratio(1, 1))
        };
        RiskScore { stakeholder_id: stakeholder.clone(), tick, value, components, matured: self.matured, neutral }
    }
}

pub fn report_counts(report: &IndexReport) -> (u64, u64) {
    let defined = report.classes.values().filter(|c| **c != IndexClass::Undefined).count();
    let alerts = report.classes.values().filter(|c| **c == IndexClass::Alert).count();
    (alerts as u64, defined as u64)
}

/// Gather the stakeholder's debtor history as of `tick`.
pub fn risk_inputs(engine: &Engine, stakeholder: &ActorId, tick: Tick) -> RiskInputs {
    let mut inputs = RiskInputs::default();
    for r in engine.receivables().filter(|r| &r.debtor == stakeholder && r.due_tick <= tick) {
        inputs.matured += 1;
        match r.status {
            ReceivableStatus::Defaulted if r.defaulted_tick.is_some_and(|t| t <= tick) => inputs.defaulted += 1,
            ReceivableStatus::Paid if r.paid_tick.is_some_and(|t| t <= tick && t > r.due_tick) => inputs.late += 1,
            _ => {}
        }
    }
    inputs.report = engine.latest_report(stakeholder, tick).map(report_counts);
    inputs
}

pub fn score_risk(
    engine: &Engine,
    stakeholder: &ActorId,
    tick: Tick,
    w: &RiskWeights,
) -> Result<RiskScore, HealthError> {
    if !engine.is_stakeholder(stakeholder) {
        return Err(HealthError::UnknownStakeholder(stakeholder.clone()));
    }
    Ok(risk_inputs(engine, stakeholder, tick).score(stakeholder, tick, w))
}
