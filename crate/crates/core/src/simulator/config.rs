//! Scenario configuration, read from JSON or TOML.
//!
//! ```toml
//! seed = 42
//! stakeholder_count = 3
//! ticks = 60
//! initial_cash = 500000
//! trade_graph = [
//!   { supplier = "S01", buyer = "S02", intensity = "1/2" },
//!   { supplier = "S02", buyer = "S03", intensity = "0.3" },
//! ]
//! face_value = { min = 5000, max = 50000 }
//! term = { min = 5, max = 20 }
//!
//! [default_payment_behavior]
//! p_on_time = "0.8"
//! p_late = "0.15"
//! p_default = "0.05"
//!
//! [payment_behavior.S03]
//! p_on_time = "0"
//! p_late = "0"
//! p_default = "1"
//! ```
//!
//! Probabilities and intensities are exact rationals written as decimals or `n/d`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contracts::ContractParams;
use crate::ids::{ActorId, Amount, Tick};
use crate::ledger::Role;
use crate::platform::PlatformSpec;
use crate::rational::{ratio, Rational};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeEdge {
    pub supplier: ActorId,
    pub buyer: ActorId,
    /// Probability of one sale on this edge per tick.
    #[serde(with = "crate::rational::serde_str")]
    pub intensity: Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentBehavior {
    #[serde(with = "crate::rational::serde_str")]
    pub p_on_time: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub p_late: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub p_default: Rational,
}

impl Default for PaymentBehavior {
    fn default() -> Self {
        Self { p_on_time: ratio(8, 10), p_late: ratio(15, 100), p_default: ratio(5, 100) }
    }
}

impl PaymentBehavior {
    fn validate(&self, who: &str) -> Result<(), SimError> {
        let zero = ratio(0, 1);
        let one = ratio(1, 1);
        for p in [self.p_on_time, self.p_late, self.p_default] {
            if p < zero || p > one {
                return Err(SimError::InvalidConfig(format!("{who}: probabilities must lie in [0, 1]")));
            }
        }
        if self.p_on_time + self.p_late + self.p_default != one {
            return Err(SimError::InvalidConfig(format!("{who}: probabilities must sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: u64,
    pub max: u64,
}

/// Rule the driver follows when the health engine recommends securitization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub securitize: bool,
    /// Minimum ticks between two deals of the same originator.
    pub cooldown: Tick,
    pub max_pool: usize,
    pub abs_units: u64,
    /// Share of units an investor buys right after issuance.
    #[serde(with = "crate::rational::serde_str")]
    pub sell_fraction: Rational,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { securitize: true, cooldown: 20, max_pool: 5, abs_units: 10, sell_fraction: ratio(1, 2) }
    }
}

fn default_investors() -> usize {
    3
}

fn default_observers() -> usize {
    1
}

fn default_snapshot_every() -> Tick {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub stakeholder_count: usize,
    pub ticks: Tick,
    #[serde(default = "default_investors")]
    pub investors: usize,
    #[serde(default = "default_observers")]
    pub observers: usize,
    pub initial_cash: Amount,
    pub trade_graph: Vec<TradeEdge>,
    pub face_value: ValueRange,
    /// Ticks from sale to due date.
    pub term: ValueRange,
    #[serde(default)]
    pub default_payment_behavior: PaymentBehavior,
    /// Per-debtor overrides.
    #[serde(default)]
    pub payment_behavior: BTreeMap<ActorId, PaymentBehavior>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: Tick,
    #[serde(default = "default_true")]
    pub silo_sharing_default: bool,
    #[serde(default)]
    pub silo_sharing: BTreeMap<ActorId, bool>,
    #[serde(default)]
    pub params: ContractParams,
    #[serde(default)]
    pub policy: PolicyConfig,
}

impl ScenarioConfig {
    /// `count` stakeholders in a line, each supplying the next with the same intensity.
    pub fn chain(seed: u64, count: usize, ticks: Tick, intensity: Rational) -> Self {
        let ids = stakeholder_ids(count);
        let trade_graph =
            ids.windows(2).map(|w| TradeEdge { supplier: w[0].clone(), buyer: w[1].clone(), intensity }).collect();
        Self {
            seed,
            stakeholder_count: count,
            ticks,
            investors: default_investors(),
            observers: default_observers(),
            initial_cash: 200_000,
            trade_graph,
            face_value: ValueRange { min: 5_000, max: 50_000 },
            term: ValueRange { min: 5, max: 20 },
            default_payment_behavior: PaymentBehavior::default(),
            payment_behavior: BTreeMap::new(),
            snapshot_every: default_snapshot_every(),
            silo_sharing_default: true,
            silo_sharing: BTreeMap::new(),
            params: ContractParams::default(),
            policy: PolicyConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Platform for this scenario: its members and contract parameters, keys derived from
    /// the seed.
    pub fn platform_spec(&self) -> PlatformSpec {
        let mut spec = PlatformSpec::new(format!("scenario-{}", self.seed), self.members());
        spec.params = self.params.clone();
        spec
    }

    /// Load by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SimError::InvalidConfig(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn stakeholders(&self) -> Vec<ActorId> {
        stakeholder_ids(self.stakeholder_count)
    }

    pub fn investor_ids(&self) -> Vec<ActorId> {
        (1..=self.investors).map(|i| ActorId::new(format!("I{i}"))).collect()
    }

    /// Every network member with its role: stakeholders, investors, observers.
    pub fn members(&self) -> Vec<(ActorId, Role)> {
        let mut m: Vec<_> = self.stakeholders().into_iter().map(|s| (s, Role::StakeholderValidator)).collect();
        m.extend(self.investor_ids().into_iter().map(|i| (i, Role::ExternalInvestor)));
        m.extend((1..=self.observers).map(|i| (ActorId::new(format!("O{i}")), Role::ExternalObserver)));
        m
    }

    pub fn behavior(&self, debtor: &ActorId) -> PaymentBehavior {
        self.payment_behavior.get(debtor).copied().unwrap_or(self.default_payment_behavior)
    }

    pub fn shares_silo(&self, s: &ActorId) -> bool {
        self.silo_sharing.get(s).copied().unwrap_or(self.silo_sharing_default)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.stakeholder_count == 0 {
            return bad("stakeholder_count must be positive".into());
        }
        if self.ticks == 0 {
            return bad("ticks must be positive".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be positive".into());
        }
        if self.face_value.min == 0 || self.face_value.min > self.face_value.max {
            return bad("face_value range must satisfy 1 <= min <= max".into());
        }
        if self.term.min == 0 || self.term.min > self.term.max {
            return bad("term range must satisfy 1 <= min <= max".into());
        }
        let ids = self.stakeholders();
        let known = |a: &ActorId| ids.contains(a);
        for e in &self.trade_graph {
            if !known(&e.supplier) || !known(&e.buyer) {
                return bad(format!("trade edge {} -> {} references an unknown stakeholder", e.supplier, e.buyer));
            }
            if e.supplier == e.buyer {
                return bad(format!("trade edge {} -> {} is a self-loop", e.supplier, e.buyer));
            }
            if e.intensity < ratio(0, 1) || e.intensity > ratio(1, 1) {
                return bad(format!("trade edge {} -> {}: intensity must lie in [0, 1]", e.supplier, e.buyer));
            }
        }
        self.default_payment_behavior.validate("default_payment_behavior")?;
        for (who, b) in &self.payment_behavior {
            if !known(who) {
                return bad(format!("payment_behavior references unknown stakeholder {who}"));
            }
            b.validate(who.as_str())?;
        }
        for who in self.silo_sharing.keys() {
            if !known(who) {
                return bad(format!("silo_sharing references unknown stakeholder {who}"));
            }
        }
        self.params.validate().map_err(SimError::InvalidConfig)?;
        self.params.thresholds.validate().map_err(SimError::InvalidConfig)?;
        self.params.risk_weights.validate().map_err(SimError::InvalidConfig)?;
        let p = &self.policy;
        if p.securitize && (self.investors < 2 || p.abs_units == 0 || p.max_pool == 0) {
            return bad("securitization policy needs at least two investors, abs_units >= 1 and max_pool >= 1".into());
        }
        if p.sell_fraction < ratio(0, 1) || p.sell_fraction > ratio(1, 1) {
            return bad("sell_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// `S01`, `S02`, … padded to at least two digits.
pub fn stakeholder_ids(count: usize) -> Vec<ActorId> {
    let width = count.to_string().len().max(2);
    (1..=count).map(|i| ActorId::new(format!("S{i:0width$}"))).collect()
}
