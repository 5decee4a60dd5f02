//! Financial indices over balance-sheet snapshots and their Good/Watch/Alert classification.
//!
//! Formulas (all exact rationals, any zero denominator gives an undefined value):
//!
//! | index                        | value                                                     |
//! |------------------------------|-----------------------------------------------------------|
//! | `debt_index`                 | total debts / total assets                                |
//! | `quick_ratio`                | (cash + receivables) / current liabilities                |
//! | `availability_index`         | current assets / current liabilities                      |
//! | `return_of_capital`          | capital returned / invested capital                       |
//! | `rotation_of_current_assets` | production value / (current assets − current liabilities) |
//! | `warehouse_turnover`         | cost of goods sold / average inventory                    |
//! | `solvency_index`             | total assets / total debts                                |
//!
//! Rotation is undefined when working capital is not positive. The quick ratio uses the
//! conventional acid-test form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Decoder, Encoder};
use crate::ids::{ActorId, Amount, Tick};
use crate::rational::{ratio, to_decimal, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("snapshot invariant violated: {0}")]
    InvariantViolation(String),
    #[error("unknown index name {0:?}")]
    UnknownIndexName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSheetSnapshot {
    pub stakeholder_id: ActorId,
    pub period_tick: Tick,
    #[serde(default)]
    pub cash: Amount,
    #[serde(default)]
    pub receivables_value: Amount,
    #[serde(default)]
    pub inventory_value: Amount,
    #[serde(default)]
    pub other_current_assets: Amount,
    #[serde(default)]
    pub fixed_assets: Amount,
    #[serde(default)]
    pub current_liabilities: Amount,
    #[serde(default)]
    pub long_term_liabilities: Amount,
    #[serde(default)]
    pub production_value: Amount,
    #[serde(default)]
    pub cost_of_goods_sold: Amount,
    #[serde(default)]
    pub average_inventory: Amount,
    #[serde(default)]
    pub invested_capital: Amount,
    #[serde(default)]
    pub capital_returned: Amount,
}

fn checked_sum(parts: &[Amount], what: &str) -> Result<u128, IndexError> {
    let total: u128 = parts.iter().map(|&v| v as u128).sum();
    if total > i128::MAX as u128 / 4 {
        return Err(IndexError::InvariantViolation(format!("{what} overflows")));
    }
    Ok(total)
}

impl BalanceSheetSnapshot {
    pub fn current_assets(&self) -> u128 {
        [self.cash, self.receivables_value, self.inventory_value, self.other_current_assets]
            .iter()
            .map(|&v| v as u128)
            .sum()
    }

    pub fn total_assets(&self) -> u128 {
        self.current_assets() + self.fixed_assets as u128
    }

    pub fn total_debts(&self) -> u128 {
        self.current_liabilities as u128 + self.long_term_liabilities as u128
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if self.stakeholder_id.as_str().is_empty() {
            return Err(IndexError::InvariantViolation("empty stakeholder id".into()));
        }
        checked_sum(
            &[self.cash, self.receivables_value, self.inventory_value, self.other_current_assets, self.fixed_assets],
            "total assets",
        )?;
        checked_sum(&[self.current_liabilities, self.long_term_liabilities], "total debts")?;
        Ok(())
    }

    /// Multiply every monetary field by `k`.
    pub fn scaled(&self, k: u64) -> Option<Self> {
        let m = |v: Amount| v.checked_mul(k);
        Some(Self {
            stakeholder_id: self.stakeholder_id.clone(),
            period_tick: self.period_tick,
            cash: m(self.cash)?,
            receivables_value: m(self.receivables_value)?,
            inventory_value: m(self.inventory_value)?,
            other_current_assets: m(self.other_current_assets)?,
            fixed_assets: m(self.fixed_assets)?,
            current_liabilities: m(self.current_liabilities)?,
            long_term_liabilities: m(self.long_term_liabilities)?,
            production_value: m(self.production_value)?,
            cost_of_goods_sold: m(self.cost_of_goods_sold)?,
            average_inventory: m(self.average_inventory)?,
            invested_capital: m(self.invested_capital)?,
            capital_returned: m(self.capital_returned)?,
        })
    }
}

impl Canonical for BalanceSheetSnapshot {
    fn encode(&self, enc: &mut Encoder) {
        self.stakeholder_id.encode(enc);
        enc.u64(self.period_tick)
            .u64(self.cash)
            .u64(self.receivables_value)
            .u64(self.inventory_value)
            .u64(self.other_current_assets)
            .u64(self.fixed_assets)
            .u64(self.current_liabilities)
            .u64(self.long_term_liabilities)
            .u64(self.production_value)
            .u64(self.cost_of_goods_sold)
            .u64(self.average_inventory)
            .u64(self.invested_capital)
            .u64(self.capital_returned);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            stakeholder_id: ActorId::decode(dec)?,
            period_tick: dec.u64()?,
            cash: dec.u64()?,
            receivables_value: dec.u64()?,
            inventory_value: dec.u64()?,
            other_current_assets: dec.u64()?,
            fixed_assets: dec.u64()?,
            current_liabilities: dec.u64()?,
            long_term_liabilities: dec.u64()?,
            production_value: dec.u64()?,
            cost_of_goods_sold: dec.u64()?,
            average_inventory: dec.u64()?,
            invested_capital: dec.u64()?,
            capital_returned: dec.u64()?,
        })
    }
}

/// A stakeholder's voluntarily shared private figures for one period, plus the
/// customers it supplies. `cash` and `receivables_value` are superseded by ledger state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiloRecord {
    pub snapshot: BalanceSheetSnapshot,
    #[serde(default)]
    pub buyers: Vec<ActorId>,
}

impl Canonical for SiloRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.nested(|e| self.snapshot.encode(e));
        enc.list(&self.buyers, |e, b| b.encode(e));
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self { snapshot: dec.nested(BalanceSheetSnapshot::decode)?, buyers: dec.list(ActorId::decode)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotField {
    Cash,
    ReceivablesValue,
    InventoryValue,
    OtherCurrentAssets,
    FixedAssets,
    CurrentLiabilities,
    LongTermLiabilities,
    ProductionValue,
    CostOfGoodsSold,
    AverageInventory,
    InvestedCapital,
    CapitalReturned,
}

impl SnapshotField {
    /// Fields only a silo can provide.
    pub const SILO_ONLY: [SnapshotField; 10] = [
        SnapshotField::InventoryValue,
        SnapshotField::OtherCurrentAssets,
        SnapshotField::FixedAssets,
        SnapshotField::CurrentLiabilities,
        SnapshotField::LongTermLiabilities,
        SnapshotField::ProductionValue,
        SnapshotField::CostOfGoodsSold,
        SnapshotField::AverageInventory,
        SnapshotField::InvestedCapital,
        SnapshotField::CapitalReturned,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexName {
    DebtIndex,
    QuickRatio,
    AvailabilityIndex,
    ReturnOfCapital,
    RotationOfCurrentAssets,
    WarehouseTurnover,
    SolvencyIndex,
}

impl IndexName {
    pub const ALL: [IndexName; 7] = [
        IndexName::DebtIndex,
        IndexName::QuickRatio,
        IndexName::AvailabilityIndex,
        IndexName::ReturnOfCapital,
        IndexName::RotationOfCurrentAssets,
        IndexName::WarehouseTurnover,
        IndexName::SolvencyIndex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IndexName::DebtIndex => "debt_index",
            IndexName::QuickRatio => "quick_ratio",
            IndexName::AvailabilityIndex => "availability_index",
            IndexName::ReturnOfCapital => "return_of_capital",
            IndexName::RotationOfCurrentAssets => "rotation_of_current_assets",
            IndexName::WarehouseTurnover => "warehouse_turnover",
            IndexName::SolvencyIndex => "solvency_index",
        }
    }

    /// Snapshot fields the index reads.
    pub fn inputs(self) -> &'static [SnapshotField] {
        use SnapshotField::*;
        match self {
            IndexName::DebtIndex | IndexName::SolvencyIndex => &[
                Cash,
                ReceivablesValue,
                InventoryValue,
                OtherCurrentAssets,
                FixedAssets,
                CurrentLiabilities,
                LongTermLiabilities,
            ],
            IndexName::QuickRatio => &[Cash, ReceivablesValue, CurrentLiabilities],
            IndexName::AvailabilityIndex => {
                &[Cash, ReceivablesValue, InventoryValue, OtherCurrentAssets, CurrentLiabilities]
            }
            IndexName::ReturnOfCapital => &[CapitalReturned, InvestedCapital],
            IndexName::RotationOfCurrentAssets => {
                &[ProductionValue, Cash, ReceivablesValue, InventoryValue, OtherCurrentAssets, CurrentLiabilities]
            }
            IndexName::WarehouseTurnover => &[CostOfGoodsSold, AverageInventory],
        }
    }
}

impl fmt::Display for IndexName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndexName {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IndexName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| IndexError::UnknownIndexName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IndexClass {
    Good,
    Watch,
    Alert,
    Undefined,
}

/// Classification parameters: `closeness` is the band realizing "below 2 but close to"
/// and "above 1 but close to" for the liquidity ratios; `roc_floor` is the
/// return-of-capital level treated as "closest to 0".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(with = "crate::rational::serde_str")]
    pub closeness: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub roc_floor: Rational,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { closeness: ratio(1, 10), roc_floor: ratio(1, 20) }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if self.closeness < ratio(0, 1) || self.closeness >= ratio(1, 2) {
            return Err("closeness band must lie in [0, 0.5)".into());
        }
        if self.roc_floor < ratio(0, 1) {
            return Err("return-of-capital floor must be non-negative".into());
        }
        Ok(())
    }
}

/// Side of the bound on which an index is in Alert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertSide {
    AtOrAbove,
    AtOrBelow,
    Below,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertRegion {
    pub side: AlertSide,
    pub bound: Rational,
}

impl AlertRegion {
    pub fn contains(&self, v: &Rational) -> bool {
        match self.side {
            AlertSide::AtOrAbove => *v >= self.bound,
            AlertSide::AtOrBelow => *v <= self.bound,
            AlertSide::Below => *v < self.bound,
        }
    }
}

/// The Alert region of an index, or `None` for indices with no alert values.
pub fn alert_region(name: IndexName, th: &Thresholds) -> Option<AlertRegion> {
    let one = ratio(1, 1);
    match name {
        IndexName::DebtIndex => Some(AlertRegion { side: AlertSide::AtOrAbove, bound: ratio(1, 2) }),
        IndexName::QuickRatio | IndexName::AvailabilityIndex => {
            Some(AlertRegion { side: AlertSide::AtOrBelow, bound: one + th.closeness })
        }
        IndexName::ReturnOfCapital => Some(AlertRegion { side: AlertSide::AtOrBelow, bound: th.roc_floor }),
        IndexName::SolvencyIndex => Some(AlertRegion { side: AlertSide::Below, bound: one }),
        IndexName::RotationOfCurrentAssets | IndexName::WarehouseTurnover => None,
    }
}

pub fn classify(name: IndexName, value: Option<&Rational>, th: &Thresholds) -> IndexClass {
    let Some(v) = value else {
        return IndexClass::Undefined;
    };
    if let Some(region) = alert_region(name, th) {
        if region.contains(v) {
            return IndexClass::Alert;
        }
    }
    match name {
        IndexName::QuickRatio | IndexName::AvailabilityIndex => {
            if *v >= ratio(2, 1) - th.closeness {
                IndexClass::Good
            } else {
                IndexClass::Watch
            }
        }
        _ => IndexClass::Good,
    }
}

/// String-keyed entry point used by the API.
pub fn classify_index(name: &str, value: Option<&Rational>, th: &Thresholds) -> Result<IndexClass, IndexError> {
    Ok(classify(name.parse()?, value, th))
}

fn div(n: u128, d: u128) -> Option<Rational> {
    (d != 0).then(|| ratio(n as i128, d as i128))
}

pub type IndexValues = BTreeMap<IndexName, Option<Rational>>;

pub fn compute_indices(s: &BalanceSheetSnapshot) -> Result<IndexValues, IndexError> {
    s.validate()?;
    let current = s.current_assets();
    let liabilities = s.current_liabilities as u128;
    let working_capital = current as i128 - liabilities as i128;
    let mut v = BTreeMap::new();
    v.insert(IndexName::DebtIndex, div(s.total_debts(), s.total_assets()));
    v.insert(IndexName::QuickRatio, div(s.cash as u128 + s.receivables_value as u128, liabilities));
    v.insert(IndexName::AvailabilityIndex, div(current, liabilities));
    v.insert(IndexName::ReturnOfCapital, div(s.capital_returned as u128, s.invested_capital as u128));
    v.insert(
        IndexName::RotationOfCurrentAssets,
        (working_capital > 0).then(|| ratio(s.production_value as i128, working_capital)),
    );
    v.insert(IndexName::WarehouseTurnover, div(s.cost_of_goods_sold as u128, s.average_inventory as u128));
    v.insert(IndexName::SolvencyIndex, div(s.total_assets(), s.total_debts()));
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexReport {
    pub stakeholder_id: ActorId,
    pub period_tick: Tick,
    pub values: BTreeMap<IndexName, Option<SerRational>>,
    pub classes: BTreeMap<IndexName, IndexClass>,
    /// Inputs that were not available; indices reading them are Undefined.
    #[serde(default)]
    pub missing: BTreeSet<SnapshotField>,
}

/// Rational with a string serde form, for maps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SerRational(#[serde(with = "crate::rational::serde_str")] pub Rational);

impl IndexReport {
    pub fn build(
        s: &BalanceSheetSnapshot,
        missing: &BTreeSet<SnapshotField>,
        th: &Thresholds,
    ) -> Result<Self, IndexError> {
        let mut values = compute_indices(s)?;
        for (name, v) in values.iter_mut() {
            if name.inputs().iter().any(|f| missing.contains(f)) {
                *v = None;
            }
        }
        let classes = values.iter().map(|(name, v)| (*name, classify(*name, v.as_ref(), th))).collect();
        Ok(Self {
            stakeholder_id: s.stakeholder_id.clone(),
            period_tick: s.period_tick,
            values: values.into_iter().map(|(k, v)| (k, v.map(SerRational))).collect(),
            classes,
            missing: missing.clone(),
        })
    }

    pub fn value(&self, name: IndexName) -> Option<&Rational> {
        self.values.get(&name).and_then(|v| v.as_ref()).map(|v| &v.0)
    }

    pub fn class(&self, name: IndexName) -> IndexClass {
        self.classes.get(&name).copied().unwrap_or(IndexClass::Undefined)
    }

    pub fn to_json(&self) -> Value {
        let indices: serde_json::Map<String, Value> = IndexName::ALL
            .iter()
            .map(|name| {
                let v = self.value(*name);
                (
                    name.as_str().to_string(),
                    json!({
                        "value": v.map(|v| to_decimal(v, 6)),
                        "exact": v.map(|v| format!("{}/{}", v.numer(), v.denom())),
                        "class": self.class(*name),
                    }),
                )
            })
            .collect();
        json!({
            "stakeholder_id": self.stakeholder_id,
            "period_tick": self.period_tick,
            "indices": indices,
            "missing": self.missing,
        })
    }
}

/// Ledger-derived figures for a stakeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerFigures {
    pub cash: Amount,
    pub receivables_value: Amount,
}

/// Merge ledger figures with optional silo data. Without a silo every silo-only field
/// is zero and flagged missing.
pub fn merge_snapshot(
    stakeholder: &ActorId,
    tick: Tick,
    ledger: LedgerFigures,
    silo: Option<&BalanceSheetSnapshot>,
) -> (BalanceSheetSnapshot, BTreeSet<SnapshotField>) {
    match silo {
        Some(s) => {
            let mut snap = s.clone();
            snap.stakeholder_id = stakeholder.clone();
            snap.period_tick = tick;
            snap.cash = ledger.cash;
            snap.receivables_value = ledger.receivables_value;
            (snap, BTreeSet::new())
        }
        None => {
            let snap = BalanceSheetSnapshot {
                stakeholder_id: stakeholder.clone(),
                period_tick: tick,
                cash: ledger.cash,
                receivables_value: ledger.receivables_value,
                ..Default::default()
            };
            (snap, SnapshotField::SILO_ONLY.into_iter().collect())
        }
    }
}
