//! Knowledge graph over committed transactions and shared silo data, with exposure
//! queries and contagion-watch inference.
//!
//! Asserted triples are append-only. Receivable facts that change over time (status)
//! live in a side table. Derived `contagion_watch` triples are kept incrementally and can
//! be recomputed from scratch at any point.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{ContractCall, ReceivableStatus};
use crate::crypto::Hash;
use crate::ids::{ActorId, Amount, AssignmentId, DealId, OfferId, ReceivableId, Tick};
use crate::ledger::{LedgerTransaction, Payload};
use crate::rational::{ratio, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("unknown payload kind {0:?}")]
    UnknownPayloadKind(String),
    #[error("unknown predicate {0:?}")]
    UnknownPredicate(String),
    #[error("malformed triple line {0:?}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    HoldsReceivable,
    OwedBy,
    Supplies,
    MemberOfDeal,
    HasAlert,
    HasSnapshot,
    /// Derived only.
    ContagionWatch,
}

impl Predicate {
    pub const ALL: [Predicate; 7] = [
        Predicate::HoldsReceivable,
        Predicate::OwedBy,
        Predicate::Supplies,
        Predicate::MemberOfDeal,
        Predicate::HasAlert,
        Predicate::HasSnapshot,
        Predicate::ContagionWatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::HoldsReceivable => "holds_receivable",
            Predicate::OwedBy => "owed_by",
            Predicate::Supplies => "supplies",
            Predicate::MemberOfDeal => "member_of_deal",
            Predicate::HasAlert => "has_alert",
            Predicate::HasSnapshot => "has_snapshot",
            Predicate::ContagionWatch => "contagion_watch",
        }
    }
}

impl FromStr for Predicate {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| KnowledgeError::UnknownPredicate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Stakeholder,
    Receivable,
    Deal,
    Alert,
    Snapshot,
}

impl EntityKind {
    fn as_str(self) -> &'static str {
        match self {
            EntityKind::Stakeholder => "stakeholder",
            EntityKind::Receivable => "receivable",
            EntityKind::Deal => "deal",
            EntityKind::Alert => "alert",
            EntityKind::Snapshot => "snapshot",
        }
    }
}

/// A typed entity, rendered `kind:id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub kind: EntityKind,
    pub id: String,
}

impl Entity {
    pub fn stakeholder(id: &ActorId) -> Self {
        Self { kind: EntityKind::Stakeholder, id: id.to_string() }
    }

    pub fn receivable(id: &ReceivableId) -> Self {
        Self { kind: EntityKind::Receivable, id: id.to_string() }
    }

    pub fn deal(id: &DealId) -> Self {
        Self { kind: EntityKind::Deal, id: id.to_string() }
    }

    pub fn alert(id: &str) -> Self {
        Self { kind: EntityKind::Alert, id: id.to_string() }
    }

    pub fn snapshot(stakeholder: &ActorId, tick: Tick) -> Self {
        Self { kind: EntityKind::Snapshot, id: format!("{stakeholder}@{tick}") }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.id)
    }
}

impl FromStr for Entity {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, id) = s.split_once(':').ok_or_else(|| KnowledgeError::Malformed(s.to_string()))?;
        let kind = [
            EntityKind::Stakeholder,
            EntityKind::Receivable,
            EntityKind::Deal,
            EntityKind::Alert,
            EntityKind::Snapshot,
        ]
        .into_iter()
        .find(|k| k.as_str() == kind)
        .ok_or_else(|| KnowledgeError::Malformed(s.to_string()))?;
        Ok(Entity { kind, id: id.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Entity,
    pub predicate: Predicate,
    pub object: Entity,
}

impl Triple {
    pub fn new(subject: Entity, predicate: Predicate, object: Entity) -> Self {
        Self { subject, predicate, object }
    }

    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.subject, self.predicate.as_str(), self.object)
    }

    pub fn parse_line(line: &str) -> Result<Self, KnowledgeError> {
        let mut parts = line.split('\t');
        let (Some(s), Some(p), Some(o), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(KnowledgeError::Malformed(line.to_string()));
        };
        Ok(Triple::new(s.parse()?, p.parse()?, o.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivableFact {
    pub creditor: ActorId,
    pub debtor: ActorId,
    pub face_value: Amount,
    pub status: ReceivableStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    theta: SerRatio,
    asserted: BTreeSet<Triple>,
    derived: BTreeSet<Triple>,
    seen: BTreeSet<Hash>,
    receivables: BTreeMap<ReceivableId, ReceivableFact>,
    deals: BTreeMap<DealId, Vec<ReceivableId>>,
    offers: BTreeMap<OfferId, ReceivableId>,
    assignments: BTreeMap<AssignmentId, ReceivableId>,
    /// creditor → debtor → exposure.
    exposures: BTreeMap<ActorId, BTreeMap<ActorId, u128>>,
    current_assets: BTreeMap<ActorId, u128>,
    alerting: BTreeMap<ActorId, BTreeSet<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SerRatio(#[serde(with = "crate::rational::serde_str")] Rational);

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(ratio(1, 4))
    }
}

impl KnowledgeBase {
    /// `theta` is the exposure fraction above which contagion is flagged.
    pub fn new(theta: Rational) -> Self {
        Self {
            theta: SerRatio(theta),
            asserted: BTreeSet::new(),
            derived: BTreeSet::new(),
            seen: BTreeSet::new(),
            receivables: BTreeMap::new(),
            deals: BTreeMap::new(),
            offers: BTreeMap::new(),
            assignments: BTreeMap::new(),
            exposures: BTreeMap::new(),
            current_assets: BTreeMap::new(),
            alerting: BTreeMap::new(),
        }
    }

    pub fn theta(&self) -> Rational {
        self.theta.0
    }

    pub fn asserted(&self) -> &BTreeSet<Triple> {
        &self.asserted
    }

    pub fn derived(&self) -> &BTreeSet<Triple> {
        &self.derived
    }

    pub fn receivable(&self, id: &ReceivableId) -> Option<&ReceivableFact> {
        self.receivables.get(id)
    }

    pub fn current_assets(&self, stakeholder: &ActorId) -> Option<u128> {
        self.current_assets.get(stakeholder).copied()
    }

    pub fn is_alerting(&self, stakeholder: &ActorId) -> bool {
        self.alerting.get(stakeholder).is_some_and(|a| !a.is_empty())
    }

    fn assert(&mut self, t: Triple, added: &mut Vec<Triple>) {
        if self.asserted.insert(t.clone()) {
            added.push(t);
        }
    }

    fn set_status(&mut self, id: &ReceivableId, status: ReceivableStatus, touched: &mut BTreeSet<(ActorId, ActorId)>) {
        if let Some(f) = self.receivables.get_mut(id) {
            let before = exposure_counts(f.status);
            f.status = status;
            let after = exposure_counts(f.status);
            let key = (f.creditor.clone(), f.debtor.clone());
            let face = f.face_value as u128;
            let e = self.exposures.entry(key.0.clone()).or_default().entry(key.1.clone()).or_insert(0);
            match (before, after) {
                (true, false) => *e -= face,
                (false, true) => *e += face,
                _ => {}
            }
            touched.insert(key);
        }
    }

    /// Map one committed transaction to triples. Idempotent on `tx_id`.
    pub fn ingest(&mut self, tx: &LedgerTransaction) -> Vec<Triple> {
        let mut added = Vec::new();
        if !self.seen.insert(tx.tx_id) {
            return added;
        }
        let mut touched = BTreeSet::new();
        match &tx.payload {
            Payload::TradeCreditCreated { receivable_id, creditor, debtor, face_value, .. } => {
                let r = Entity::receivable(receivable_id);
                self.assert(
                    Triple::new(Entity::stakeholder(creditor), Predicate::HoldsReceivable, r.clone()),
                    &mut added,
                );
                self.assert(Triple::new(r, Predicate::OwedBy, Entity::stakeholder(debtor)), &mut added);
                self.receivables.insert(
                    receivable_id.clone(),
                    ReceivableFact {
                        creditor: creditor.clone(),
                        debtor: debtor.clone(),
                        face_value: *face_value,
                        status: ReceivableStatus::Open,
                    },
                );
                *self.exposures.entry(creditor.clone()).or_default().entry(debtor.clone()).or_insert(0) +=
                    *face_value as u128;
                touched.insert((creditor.clone(), debtor.clone()));
            }
            Payload::PaymentMade { receivable_id, .. } => {
                self.set_status(receivable_id, ReceivableStatus::Paid, &mut touched);
            }
            Payload::SnapshotPublished { record } => {
                let s = &record.snapshot.stakeholder_id;
                self.assert(
                    Triple::new(
                        Entity::stakeholder(s),
                        Predicate::HasSnapshot,
                        Entity::snapshot(s, record.snapshot.period_tick),
                    ),
                    &mut added,
                );
                for b in &record.buyers {
                    self.assert(
                        Triple::new(Entity::stakeholder(s), Predicate::Supplies, Entity::stakeholder(b)),
                        &mut added,
                    );
                }
            }
            Payload::ContractInvocation { call } => self.ingest_call(call, &mut added, &mut touched),
            Payload::TokenTransfer { .. } => {}
        }
        self.refresh_pairs(touched);
        added
    }

    fn ingest_call(
        &mut self,
        call: &ContractCall,
        added: &mut Vec<Triple>,
        touched: &mut BTreeSet<(ActorId, ActorId)>,
    ) {
        match call {
            ContractCall::InitiateSecuritization { deal_id, pool, .. } => {
                for r in pool {
                    self.assert(
                        Triple::new(Entity::receivable(r), Predicate::MemberOfDeal, Entity::deal(deal_id)),
                        added,
                    );
                    self.set_status(r, ReceivableStatus::Securitized, touched);
                }
                self.deals.insert(deal_id.clone(), pool.clone());
            }
            ContractCall::MarkImpaired { deal_id } => {
                let pool = self.deals.get(deal_id).cloned().unwrap_or_default();
                for r in pool {
                    if self.receivables.get(&r).is_some_and(|f| f.status == ReceivableStatus::Securitized) {
                        self.set_status(&r, ReceivableStatus::Defaulted, touched);
                    }
                }
            }
            ContractCall::OfferDiscount { offer_id, receivable_id, .. } => {
                self.offers.insert(offer_id.clone(), receivable_id.clone());
            }
            ContractCall::SettleDiscount { offer_id } => {
                if let Some(r) = self.offers.get(offer_id).cloned() {
                    self.set_status(&r, ReceivableStatus::Paid, touched);
                }
            }
            ContractCall::ProposeAssignment { assignment_id, receivable_id, .. } => {
                self.assignments.insert(assignment_id.clone(), receivable_id.clone());
            }
            ContractCall::AcceptAssignment { assignment_id } => {
                if let Some(r) = self.assignments.get(assignment_id).cloned() {
                    self.set_status(&r, ReceivableStatus::Assigned, touched);
                }
            }
            ContractCall::DeclareDefault { receivable_id } => {
                self.set_status(receivable_id, ReceivableStatus::Defaulted, touched);
            }
            ContractCall::PurchaseAbs { .. }
            | ContractCall::SettleSecuritization { .. }
            | ContractCall::RespondDiscount { .. } => {}
        }
    }

    /// Current assets of `stakeholder` from its merged balance sheet (ledger figures plus silo).
    pub fn set_current_assets(&mut self, stakeholder: &ActorId, assets: u128) {
        if self.current_assets.get(stakeholder) == Some(&assets) {
            return;
        }
        self.current_assets.insert(stakeholder.clone(), assets);
        let pairs = self
            .exposures
            .get(stakeholder)
            .map(|m| m.keys().map(|b| (stakeholder.clone(), b.clone())).collect())
            .unwrap_or_default();
        self.refresh_pairs(pairs);
    }

    /// Replace the stakeholder's set of current Alert-severity alerts.
    pub fn set_current_alerts(
        &mut self,
        stakeholder: &ActorId,
        alert_ids: impl IntoIterator<Item = String>,
    ) -> Vec<Triple> {
        let mut added = Vec::new();
        let ids: BTreeSet<String> = alert_ids.into_iter().collect();
        for id in &ids {
            self.assert(
                Triple::new(Entity::stakeholder(stakeholder), Predicate::HasAlert, Entity::alert(id)),
                &mut added,
            );
        }
        self.alerting.insert(stakeholder.clone(), ids);
        let pairs = self
            .exposures
            .iter()
            .filter(|(_, m)| m.contains_key(stakeholder))
            .map(|(a, _)| (a.clone(), stakeholder.clone()))
            .collect();
        self.refresh_pairs(pairs);
        added
    }

    /// Face value of open and securitized receivables held by `creditor` against `debtor`.
    pub fn exposure(&self, creditor: &ActorId, debtor: &ActorId) -> u128 {
        self.exposures.get(creditor).and_then(|m| m.get(debtor)).copied().unwrap_or(0)
    }

    /// Same as [`exposure`](Self::exposure) by scanning the receivable table.
    pub fn exposure_scan(&self, creditor: &ActorId, debtor: &ActorId) -> u128 {
        self.receivables
            .values()
            .filter(|f| &f.creditor == creditor && &f.debtor == debtor && exposure_counts(f.status))
            .map(|f| f.face_value as u128)
            .sum()
    }

    fn contagion_holds(&self, a: &ActorId, b: &ActorId) -> bool {
        if a == b || !self.is_alerting(b) {
            return false;
        }
        let Some(assets) = self.current_assets(a) else {
            return false;
        };
        let exposure = self.exposure(a, b);
        // exposure / assets > θ, kept integral: exposure·den > θnum·assets.
        let theta = self.theta.0;
        exposure as i128 * theta.denom() > *theta.numer() * assets as i128
    }

    fn refresh_pairs(&mut self, pairs: BTreeSet<(ActorId, ActorId)>) {
        for (a, b) in pairs {
            let t = Triple::new(Entity::stakeholder(&a), Predicate::ContagionWatch, Entity::stakeholder(&b));
            if self.contagion_holds(&a, &b) {
                self.derived.insert(t);
            } else {
                self.derived.remove(&t);
            }
        }
    }

    /// Recompute contagion triples from scratch.
    pub fn infer_contagion(&self) -> BTreeSet<Triple> {
        let stakeholders: BTreeSet<&ActorId> =
            self.receivables.values().flat_map(|f| [&f.creditor, &f.debtor]).collect();
        let mut out = BTreeSet::new();
        for a in &stakeholders {
            for b in &stakeholders {
                let scan = self.exposure_scan(a, b);
                if a == b || !self.is_alerting(b) {
                    continue;
                }
                let Some(assets) = self.current_assets(a) else { continue };
                if ratio(scan as i128, 1) > self.theta.0 * ratio(assets as i128, 1) {
                    out.insert(Triple::new(Entity::stakeholder(a), Predicate::ContagionWatch, Entity::stakeholder(b)));
                }
            }
        }
        out
    }

    /// Every triple, asserted then derived, one `subject TAB predicate TAB object` per line.
    pub fn export_tsv(&self) -> String {
        let mut out = String::new();
        for t in self.asserted.iter().chain(&self.derived) {
            out.push_str(&t.to_line());
            out.push('\n');
        }
        out
    }

    pub fn import_tsv(text: &str) -> Result<Vec<Triple>, KnowledgeError> {
        text.lines().filter(|l| !l.is_empty()).map(Triple::parse_line).collect()
    }
}

fn exposure_counts(status: ReceivableStatus) -> bool {
    matches!(status, ReceivableStatus::Open | ReceivableStatus::Securitized)
}
