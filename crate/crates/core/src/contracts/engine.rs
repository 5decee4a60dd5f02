use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::health::risk::{score_risk, RiskWeights};
use crate::ids::{ActorId, Amount, AssignmentId, DealId, OfferId, ReceivableId, Tick};
use crate::indices::{merge_snapshot, BalanceSheetSnapshot, IndexReport, LedgerFigures, SiloRecord, Thresholds};
use crate::ledger::{Executor, LedgerTransaction, Network, Payload, Role, TokenOp};
use crate::rational::{floor_mul, ratio, Rational};

use super::distribution::largest_remainder;
use super::{
    Assignment, AssignmentState, ContractCall, ContractError, DealState, DiscountOffer, Distribution, FinancingKind,
    OfferState, Payout, Receivable, ReceivableStatus, SecuritizationDeal, UnitRange,
};

/// Platform defaults for per-deal parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractParams {
    #[serde(with = "crate::rational::serde_str")]
    pub advance_rate: Rational,
    pub grace: Tick,
    #[serde(with = "crate::rational::serde_str")]
    pub fee_rate: Rational,
    pub thresholds: Thresholds,
    pub risk_weights: RiskWeights,
}

impl Default for ContractParams {
    fn default() -> Self {
        Self {
            advance_rate: ratio(85, 100),
            grace: 5,
            fee_rate: ratio(2, 100),
            thresholds: Thresholds::default(),
            risk_weights: RiskWeights::default(),
        }
    }
}

impl ContractParams {
    pub fn validate(&self) -> Result<(), String> {
        let zero = ratio(0, 1);
        let one = ratio(1, 1);
        if self.advance_rate <= zero || self.advance_rate > one {
            return Err("advance rate must lie in (0, 1]".into());
        }
        if self.fee_rate < zero || self.fee_rate >= one {
            return Err("fee rate must lie in [0, 1)".into());
        }
        self.thresholds.validate()?;
        self.risk_weights.validate()
    }
}

/// One published period: the merged snapshot and its index report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub silo: SiloRecord,
    pub snapshot: BalanceSheetSnapshot,
    pub report: IndexReport,
}

/// Contract state. Every field is a deterministic function of the committed
/// transaction sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engine {
    params: ContractParams,
    parties: BTreeMap<ActorId, Role>,
    tick: Tick,
    applied: u64,
    receivables: BTreeMap<ReceivableId, Receivable>,
    accounts: BTreeMap<ActorId, Amount>,
    minted: u128,
    burned: u128,
    deals: BTreeMap<DealId, SecuritizationDeal>,
    offers: BTreeMap<OfferId, DiscountOffer>,
    assignments: BTreeMap<AssignmentId, Assignment>,
    periods: BTreeMap<ActorId, BTreeMap<Tick, PeriodRecord>>,
}

type Res<T = ()> = Result<T, ContractError>;

impl Engine {
    pub fn new(network: &Network, params: ContractParams) -> Self {
        Self::with_parties(network.nodes().map(|n| (n.node_id.clone(), n.role)), params)
    }

    pub fn with_parties(parties: impl IntoIterator<Item = (ActorId, Role)>, params: ContractParams) -> Self {
        Self {
            params,
            parties: parties.into_iter().collect(),
            tick: 0,
            applied: 0,
            receivables: BTreeMap::new(),
            accounts: BTreeMap::new(),
            minted: 0,
            burned: 0,
            deals: BTreeMap::new(),
            offers: BTreeMap::new(),
            assignments: BTreeMap::new(),
            periods: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &ContractParams {
        &self.params
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    /// Number of successfully applied transactions.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn role(&self, party: &ActorId) -> Option<Role> {
        self.parties.get(party).copied()
    }

    pub fn stakeholders(&self) -> impl Iterator<Item = &ActorId> {
        self.parties.iter().filter(|(_, r)| **r == Role::StakeholderValidator).map(|(id, _)| id)
    }

    pub fn is_stakeholder(&self, party: &ActorId) -> bool {
        self.role(party) == Some(Role::StakeholderValidator)
    }

    pub fn balance(&self, account: &ActorId) -> Amount {
        self.accounts.get(account).copied().unwrap_or(0)
    }

    pub fn accounts(&self) -> &BTreeMap<ActorId, Amount> {
        &self.accounts
    }

    pub fn total_minted(&self) -> u128 {
        self.minted
    }

    pub fn total_burned(&self) -> u128 {
        self.burned
    }

    pub fn total_supply(&self) -> u128 {
        self.minted - self.burned
    }

    pub fn sum_balances(&self) -> u128 {
        self.accounts.values().map(|&v| v as u128).sum()
    }

    pub fn receivable(&self, id: &ReceivableId) -> Option<&Receivable> {
        self.receivables.get(id)
    }

    pub fn receivables(&self) -> impl Iterator<Item = &Receivable> {
        self.receivables.values()
    }

    pub fn deal(&self, id: &DealId) -> Option<&SecuritizationDeal> {
        self.deals.get(id)
    }

    pub fn deals(&self) -> impl Iterator<Item = &SecuritizationDeal> {
        self.deals.values()
    }

    pub fn offer(&self, id: &OfferId) -> Option<&DiscountOffer> {
        self.offers.get(id)
    }

    pub fn offers(&self) -> impl Iterator<Item = &DiscountOffer> {
        self.offers.values()
    }

    pub fn assignment(&self, id: &AssignmentId) -> Option<&Assignment> {
        self.assignments.get(id)
    }

    pub fn assignments(&self) -> impl Iterator<Item = &Assignment> {
        self.assignments.values()
    }

    /// Published periods of a stakeholder, oldest first.
    pub fn periods(&self, stakeholder: &ActorId) -> impl Iterator<Item = &PeriodRecord> {
        self.periods.get(stakeholder).into_iter().flat_map(|m| m.values())
    }

    pub fn period(&self, stakeholder: &ActorId, tick: Tick) -> Option<&PeriodRecord> {
        self.periods.get(stakeholder)?.get(&tick)
    }

    /// Latest index report with period at or before `tick`.
    pub fn latest_report(&self, stakeholder: &ActorId, tick: Tick) -> Option<&IndexReport> {
        self.periods.get(stakeholder)?.range(..=tick).next_back().map(|(_, p)| &p.report)
    }

    /// Cash (FT balance) and open receivables held as creditor.
    pub fn ledger_figures(&self, stakeholder: &ActorId) -> LedgerFigures {
        LedgerFigures {
            cash: self.balance(stakeholder),
            receivables_value: self
                .receivables
                .values()
                .filter(|r| &r.creditor == stakeholder && r.status == ReceivableStatus::Open)
                .map(|r| r.face_value)
                .sum(),
        }
    }

    /// Balance sheet at `tick` from current ledger state plus `silo` (or, when `None`,
    /// the latest silo the stakeholder published at or before `tick`).
    pub fn build_snapshot(
        &self,
        stakeholder: &ActorId,
        tick: Tick,
        silo: Option<&BalanceSheetSnapshot>,
    ) -> Res<(BalanceSheetSnapshot, BTreeSet<crate::indices::SnapshotField>)> {
        if !self.is_stakeholder(stakeholder) {
            return Err(ContractError::UnknownParty(stakeholder.clone()));
        }
        let published = || self.periods.get(stakeholder)?.range(..=tick).next_back().map(|(_, p)| &p.silo.snapshot);
        let silo = silo.or_else(published);
        Ok(merge_snapshot(stakeholder, tick, self.ledger_figures(stakeholder), silo))
    }

    /// FT conservation plus structural invariants of receivables and deals.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.sum_balances() != self.total_supply() {
            return Err(format!(
                "FT conservation: balances {} != minted {} - burned {}",
                self.sum_balances(),
                self.minted,
                self.burned
            ));
        }
        for r in self.receivables.values() {
            if r.face_value == 0 || r.creditor == r.debtor {
                return Err(format!("receivable {} malformed", r.receivable_id));
            }
            let has_deal = r.deal.is_some();
            match r.status {
                ReceivableStatus::Securitized if !has_deal => {
                    return Err(format!("securitized receivable {} without deal", r.receivable_id))
                }
                ReceivableStatus::Paid if r.paid_tick.is_none() => {
                    return Err(format!("paid receivable {} without payment tick", r.receivable_id))
                }
                ReceivableStatus::Defaulted if r.defaulted_tick.is_none() => {
                    return Err(format!("defaulted receivable {} without tick", r.receivable_id))
                }
                _ => {}
            }
        }
        for d in self.deals.values() {
            let face: Amount = d.pool.iter().map(|id| self.receivables[id].face_value).sum();
            if face != d.pool_face_value {
                return Err(format!("deal {} pool face mismatch", d.deal_id));
            }
            if d.advance_paid != floor_mul(&d.advance_rate, d.pool_face_value) {
                return Err(format!("deal {} advance mismatch", d.deal_id));
            }
            if d.abs_units * d.unit_notional + d.rounding_residual != d.pool_face_value {
                return Err(format!("deal {} notional residual mismatch", d.deal_id));
            }
            let mut next = 0;
            for h in &d.holders {
                if h.start != next || h.end <= h.start {
                    return Err(format!("deal {} holder ranges not a disjoint cover", d.deal_id));
                }
                next = h.end;
            }
            if next > d.abs_units {
                return Err(format!("deal {} oversold", d.deal_id));
            }
            let escrow = self.balance(&d.deal_id.escrow_account());
            let expected = match &d.distribution {
                Some(dist) => {
                    if dist.distributed() + dist.retained != dist.collected {
                        return Err(format!("deal {} distribution does not conserve", d.deal_id));
                    }
                    d.collected - dist.collected
                }
                None => d.collected,
            };
            if escrow != expected {
                return Err(format!("deal {} escrow {} != {}", d.deal_id, escrow, expected));
            }
        }
        Ok(())
    }

    /// Apply one transaction's payload as `submitter` at logical time `now`.
    pub fn apply(&mut self, submitter: &ActorId, now: Tick, payload: &Payload) -> Res {
        if now < self.tick {
            return Err(ContractError::StaleTimestamp { tx: now, now: self.tick });
        }
        if !self.parties.contains_key(submitter) {
            return Err(ContractError::UnknownParty(submitter.clone()));
        }
        match payload {
            Payload::TradeCreditCreated { receivable_id, creditor, debtor, face_value, due_tick } => {
                self.create_receivable(submitter, now, receivable_id, creditor, debtor, *face_value, *due_tick)
            }
            Payload::PaymentMade { receivable_id, payer } => self.pay_receivable(submitter, now, receivable_id, payer),
            Payload::SnapshotPublished { record } => self.publish_snapshot(submitter, now, record),
            Payload::TokenTransfer { token } => self.token(submitter, token),
            Payload::ContractInvocation { call } => self.invoke(submitter, now, call),
        }?;
        self.tick = now;
        self.applied += 1;
        Ok(())
    }

    fn invoke(&mut self, submitter: &ActorId, now: Tick, call: &ContractCall) -> Res {
        match call {
            ContractCall::InitiateSecuritization { deal_id, spv, pool, advance_rate, abs_units } => {
                self.initiate_securitization(submitter, now, deal_id, spv, pool, advance_rate.as_ref(), *abs_units)
            }
            ContractCall::PurchaseAbs { deal_id, units, price } => {
                self.purchase_abs(submitter, deal_id, *units, *price)
            }
            ContractCall::SettleSecuritization { deal_id } => self.settle_securitization(now, deal_id),
            ContractCall::MarkImpaired { deal_id } => self.mark_impaired(now, deal_id),
            ContractCall::OfferDiscount { offer_id, receivable_id, discount_rate, expires_tick } => {
                self.offer_discount(submitter, now, offer_id, receivable_id, discount_rate, *expires_tick)
            }
            ContractCall::RespondDiscount { offer_id, accept } => {
                self.respond_discount(submitter, now, offer_id, *accept)
            }
            ContractCall::SettleDiscount { offer_id } => self.settle_discount(submitter, now, offer_id),
            ContractCall::ProposeAssignment {
                assignment_id,
                receivable_id,
                assignee,
                advance_rate,
                fee_rate,
                kind,
            } => self.propose_assignment(
                submitter,
                assignment_id,
                receivable_id,
                assignee,
                advance_rate.as_ref(),
                fee_rate.as_ref(),
                *kind,
            ),
            ContractCall::AcceptAssignment { assignment_id } => self.accept_assignment(submitter, assignment_id),
            ContractCall::DeclareDefault { receivable_id } => self.declare_default(now, receivable_id),
        }
    }

    fn require_funds(&self, account: &ActorId, needed: Amount) -> Res {
        let available = self.balance(account);
        if available < needed {
            return Err(ContractError::InsufficientFunds { account: account.clone(), needed, available });
        }
        Ok(())
    }

    /// Callers check funds first; a shortfall here is a bug.
    fn transfer(&mut self, from: &ActorId, to: &ActorId, amount: Amount) {
        if amount == 0 || from == to {
            return;
        }
        let src = self.accounts.get_mut(from).expect("transfer from empty account");
        *src = src.checked_sub(amount).expect("transfer exceeds balance");
        if *src == 0 {
            self.accounts.remove(from);
        }
        *self.accounts.entry(to.clone()).or_insert(0) += amount;
    }

    fn receivable_ref(&self, id: &ReceivableId) -> Res<&Receivable> {
        self.receivables.get(id).ok_or_else(|| ContractError::UnknownReceivable(id.clone()))
    }

    fn require_registered(&self, party: &ActorId) -> Res {
        if self.parties.contains_key(party) {
            Ok(())
        } else {
            Err(ContractError::UnknownParty(party.clone()))
        }
    }

    fn require_stakeholder(&self, party: &ActorId) -> Res {
        if self.is_stakeholder(party) {
            Ok(())
        } else {
            Err(ContractError::UnknownParty(party.clone()))
        }
    }

    fn require_financier(&self, party: &ActorId) -> Res {
        if self.role(party) == Some(Role::ExternalInvestor) {
            Ok(())
        } else {
            Err(ContractError::UnknownParty(party.clone()))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn create_receivable(
        &mut self,
        submitter: &ActorId,
        now: Tick,
        id: &ReceivableId,
        creditor: &ActorId,
        debtor: &ActorId,
        face_value: Amount,
        due_tick: Tick,
    ) -> Res {
        self.require_stakeholder(creditor)?;
        self.require_stakeholder(debtor)?;
        if creditor == debtor {
            return Err(ContractError::UnknownParty(debtor.clone()));
        }
        if submitter != creditor {
            return Err(ContractError::WrongParty);
        }
        if face_value == 0 {
            return Err(ContractError::NonPositiveValue);
        }
        if due_tick <= now {
            return Err(ContractError::PastDue { due: due_tick, now });
        }
        if self.receivables.contains_key(id) {
            return Err(ContractError::DuplicateId(id.to_string()));
        }
        self.receivables.insert(
            id.clone(),
            Receivable {
                receivable_id: id.clone(),
                creditor: creditor.clone(),
                debtor: debtor.clone(),
                face_value,
                due_tick,
                status: ReceivableStatus::Open,
                created_tick: now,
                beneficiary: creditor.clone(),
                deal: None,
                paid_tick: None,
                paid_amount: None,
                defaulted_tick: None,
            },
        );
        Ok(())
    }

    fn pay_receivable(&mut self, submitter: &ActorId, now: Tick, id: &ReceivableId, payer: &ActorId) -> Res {
        let r = self.receivable_ref(id)?;
        if payer != submitter || payer != &r.debtor {
            return Err(ContractError::WrongPayer);
        }
        match r.status {
            ReceivableStatus::Paid | ReceivableStatus::Defaulted => {
                return Err(ContractError::AlreadySettled(id.clone()))
            }
            ReceivableStatus::Open | ReceivableStatus::Assigned | ReceivableStatus::Securitized => {}
        }
        let amount = r.face_value;
        self.require_funds(payer, amount)?;
        let beneficiary = r.beneficiary.clone();
        let deal = r.deal.clone();
        self.transfer(payer, &beneficiary, amount);
        let r = self.receivables.get_mut(id).unwrap();
        r.status = ReceivableStatus::Paid;
        r.paid_tick = Some(now);
        r.paid_amount = Some(amount);
        if let Some(deal) = deal {
            self.deals.get_mut(&deal).unwrap().collected += amount;
        }
        Ok(())
    }

    fn publish_snapshot(&mut self, submitter: &ActorId, now: Tick, record: &SiloRecord) -> Res {
        let snap = &record.snapshot;
        if &snap.stakeholder_id != submitter {
            return Err(ContractError::WrongParty);
        }
        self.require_stakeholder(submitter)?;
        snap.validate().map_err(|e| ContractError::InvalidSnapshot(e.to_string()))?;
        if snap.period_tick > now {
            return Err(ContractError::InvalidSnapshot(format!("period {} is in the future", snap.period_tick)));
        }
        if let Some((&last, _)) = self.periods.get(submitter).and_then(|m| m.iter().next_back()) {
            if snap.period_tick <= last {
                return Err(ContractError::InvalidSnapshot(format!(
                    "period {} does not follow {last}",
                    snap.period_tick
                )));
            }
        }
        let mut buyers = BTreeSet::new();
        for b in &record.buyers {
            self.require_stakeholder(b)?;
            if b == submitter || !buyers.insert(b) {
                return Err(ContractError::InvalidSnapshot(format!("bad buyer {b}")));
            }
        }
        let (merged, missing) = merge_snapshot(submitter, snap.period_tick, self.ledger_figures(submitter), Some(snap));
        let report = IndexReport::build(&merged, &missing, &self.params.thresholds)
            .map_err(|e| ContractError::InvalidSnapshot(e.to_string()))?;
        self.periods
            .entry(submitter.clone())
            .or_default()
            .insert(snap.period_tick, PeriodRecord { silo: record.clone(), snapshot: merged, report });
        Ok(())
    }

    fn token(&mut self, submitter: &ActorId, op: &TokenOp) -> Res {
        match op {
            TokenOp::Mint { to, amount } => {
                if to != submitter {
                    return Err(ContractError::WrongParty);
                }
                if *amount == 0 {
                    return Err(ContractError::NonPositiveValue);
                }
                let entry = self.accounts.entry(to.clone()).or_insert(0);
                *entry = entry
                    .checked_add(*amount)
                    .ok_or_else(|| ContractError::InvalidParameter("balance overflow".into()))?;
                self.minted += *amount as u128;
            }
            TokenOp::Burn { from, amount } => {
                if from != submitter {
                    return Err(ContractError::WrongParty);
                }
                if *amount == 0 {
                    return Err(ContractError::NonPositiveValue);
                }
                self.require_funds(from, *amount)?;
                let sink = ActorId::new("burn");
                self.transfer(from, &sink, *amount);
                self.accounts.remove(&sink);
                self.burned += *amount as u128;
            }
            TokenOp::Transfer { from, to, amount } => {
                if from != submitter {
                    return Err(ContractError::WrongParty);
                }
                self.require_registered(to)?;
                if *amount == 0 {
                    return Err(ContractError::NonPositiveValue);
                }
                self.require_funds(from, *amount)?;
                self.transfer(from, to, *amount);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn initiate_securitization(
        &mut self,
        originator: &ActorId,
        now: Tick,
        deal_id: &DealId,
        spv: &ActorId,
        pool: &[ReceivableId],
        advance_rate: Option<&Rational>,
        abs_units: u64,
    ) -> Res {
        self.require_stakeholder(originator)?;
        self.require_financier(spv)?;
        if self.deals.contains_key(deal_id) {
            return Err(ContractError::DuplicateId(deal_id.to_string()));
        }
        if pool.is_empty() {
            return Err(ContractError::EmptyPool);
        }
        let advance_rate = advance_rate.copied().unwrap_or(self.params.advance_rate);
        if advance_rate <= ratio(0, 1) || advance_rate > ratio(1, 1) {
            return Err(ContractError::InvalidParameter("advance rate must lie in (0, 1]".into()));
        }
        let mut seen = BTreeSet::new();
        let mut pool_face: Amount = 0;
        for id in pool {
            let r = self.receivables.get(id).ok_or_else(|| ContractError::ReceivableNotEligible(id.clone()))?;
            let eligible =
                r.status == ReceivableStatus::Open && &r.creditor == originator && r.due_tick > now && seen.insert(id);
            if !eligible {
                return Err(ContractError::ReceivableNotEligible(id.clone()));
            }
            pool_face += r.face_value;
        }
        if abs_units == 0 || abs_units > pool_face {
            return Err(ContractError::InvalidParameter(format!("unit count must lie in [1, {pool_face}]")));
        }
        let advance = floor_mul(&advance_rate, pool_face);
        let available = self.balance(spv);
        if available < advance {
            return Err(ContractError::SpvUnderfunded { spv: spv.clone(), needed: advance, available });
        }

        // Risk: face-weighted mean of debtor scores at initiation.
        let mut weighted = ratio(0, 1);
        for id in pool {
            let r = &self.receivables[id];
            let score = score_risk(self, &r.debtor, now, &self.params.risk_weights)
                .map(|s| s.value)
                .unwrap_or(self.params.risk_weights.neutral);
            weighted += score * ratio(r.face_value as i128, pool_face as i128);
        }

        let unit_notional = pool_face / abs_units;
        let escrow = deal_id.escrow_account();
        self.transfer(spv, originator, advance);
        for id in pool {
            let r = self.receivables.get_mut(id).unwrap();
            r.status = ReceivableStatus::Securitized;
            r.beneficiary = escrow.clone();
            r.deal = Some(deal_id.clone());
        }
        self.deals.insert(
            deal_id.clone(),
            SecuritizationDeal {
                deal_id: deal_id.clone(),
                originator: originator.clone(),
                spv_id: spv.clone(),
                pool: pool.to_vec(),
                pool_face_value: pool_face,
                advance_rate,
                advance_paid: advance,
                abs_units,
                unit_notional,
                rounding_residual: pool_face - abs_units * unit_notional,
                holders: Vec::new(),
                state: DealState::Issued,
                risk_score: weighted,
                collected: 0,
                proceeds: 0,
                history: vec![(DealState::Proposed, now), (DealState::Advanced, now), (DealState::Issued, now)],
                distribution: None,
            },
        );
        Ok(())
    }

    fn deal_ref(&self, id: &DealId) -> Res<&SecuritizationDeal> {
        self.deals.get(id).ok_or_else(|| ContractError::UnknownDeal(id.clone()))
    }

    fn purchase_abs(&mut self, buyer: &ActorId, deal_id: &DealId, units: u64, price: Option<Amount>) -> Res {
        let d = self.deal_ref(deal_id)?;
        if d.state != DealState::Issued {
            return Err(ContractError::InvalidState(format!("deal {deal_id} is not open for purchase")));
        }
        if buyer == &d.spv_id {
            return Err(ContractError::WrongParty);
        }
        if units == 0 {
            return Err(ContractError::NonPositiveValue);
        }
        let available = d.units_unsold();
        if units > available {
            return Err(ContractError::Oversubscribed { requested: units, available });
        }
        let price = price.unwrap_or(units * d.unit_notional);
        if price == 0 {
            return Err(ContractError::NonPositiveValue);
        }
        self.require_funds(buyer, price)?;
        let spv = d.spv_id.clone();
        let start = d.units_sold();
        self.transfer(buyer, &spv, price);
        let d = self.deals.get_mut(deal_id).unwrap();
        d.holders.push(UnitRange { start, end: start + units, owner: buyer.clone() });
        d.proceeds += price;
        Ok(())
    }

    /// Pay out the escrow to holders by largest remainder on unit counts; the SPV
    /// takes the share of unsold units.
    fn distribute(&mut self, deal_id: &DealId, now: Tick, final_state: DealState) {
        let d = &self.deals[deal_id];
        let mut owners: Vec<(ActorId, u64)> = Vec::new();
        for h in &d.holders {
            match owners.iter_mut().find(|(o, _)| o == &h.owner) {
                Some((_, n)) => *n += h.len(),
                None => owners.push((h.owner.clone(), h.len())),
            }
        }
        let unsold = d.units_unsold();
        let mut weights: Vec<u64> = owners.iter().map(|(_, n)| *n).collect();
        weights.push(unsold);
        let collected = d.collected;
        let shares = largest_remainder(collected, &weights);
        let retained = *shares.last().unwrap();
        let escrow = deal_id.escrow_account();
        let spv = d.spv_id.clone();
        let shortfall = d.pool_face_value - collected;
        let payouts: Vec<Payout> =
            owners.into_iter().zip(&shares).map(|((owner, units), &amount)| Payout { owner, units, amount }).collect();
        for p in &payouts {
            self.transfer(&escrow, &p.owner, p.amount);
        }
        self.transfer(&escrow, &spv, retained);
        let d = self.deals.get_mut(deal_id).unwrap();
        d.state = final_state;
        d.history.push((final_state, now));
        d.distribution = Some(Distribution { tick: now, collected, payouts, retained, shortfall });
    }

    fn settle_securitization(&mut self, now: Tick, deal_id: &DealId) -> Res {
        let d = self.deal_ref(deal_id)?;
        if d.state != DealState::Issued {
            return Err(ContractError::InvalidState(format!("deal {deal_id} is not outstanding")));
        }
        if d.pool.iter().any(|id| self.receivables[id].status != ReceivableStatus::Paid) {
            return Err(ContractError::NotYetCollectable(deal_id.clone()));
        }
        self.distribute(deal_id, now, DealState::Settled);
        Ok(())
    }

    /// Impairment closes a deal once every pool receivable is either paid or past its
    /// grace period, with at least one unpaid.
    fn mark_impaired(&mut self, now: Tick, deal_id: &DealId) -> Res {
        let d = self.deal_ref(deal_id)?;
        if d.state != DealState::Issued {
            return Err(ContractError::InvalidState(format!("deal {deal_id} is not outstanding")));
        }
        let grace = self.params.grace;
        let unpaid: Vec<ReceivableId> =
            d.pool.iter().filter(|id| self.receivables[*id].status == ReceivableStatus::Securitized).cloned().collect();
        let lapsed = |id: &ReceivableId| now > self.receivables[id].due_tick + grace;
        if unpaid.is_empty() || !unpaid.iter().all(lapsed) {
            return Err(ContractError::NotImpairable(deal_id.clone()));
        }
        for id in &unpaid {
            let r = self.receivables.get_mut(id).unwrap();
            r.status = ReceivableStatus::Defaulted;
            r.defaulted_tick = Some(now);
        }
        self.distribute(deal_id, now, DealState::Impaired);
        Ok(())
    }

    fn offer_discount(
        &mut self,
        submitter: &ActorId,
        now: Tick,
        offer_id: &OfferId,
        receivable_id: &ReceivableId,
        rate: &Rational,
        expires_tick: Option<Tick>,
    ) -> Res {
        let r = self.receivable_ref(receivable_id)?;
        if submitter != &r.debtor {
            return Err(ContractError::WrongParty);
        }
        if r.status != ReceivableStatus::Open {
            return Err(ContractError::ReceivableNotEligible(receivable_id.clone()));
        }
        if *rate <= ratio(0, 1) || *rate >= ratio(1, 1) {
            return Err(ContractError::InvalidParameter("discount rate must lie in (0, 1)".into()));
        }
        if self.offers.contains_key(offer_id) {
            return Err(ContractError::DuplicateId(offer_id.to_string()));
        }
        let expires_tick = expires_tick.unwrap_or(r.due_tick);
        if expires_tick < now {
            return Err(ContractError::OfferExpired(offer_id.clone()));
        }
        let settlement_amount = r.face_value - floor_mul(rate, r.face_value);
        let offer = DiscountOffer {
            offer_id: offer_id.clone(),
            invoice: receivable_id.clone(),
            discount_rate: *rate,
            proposer: submitter.clone(),
            creditor: r.creditor.clone(),
            expires_tick,
            state: OfferState::Offered,
            settlement_amount,
        };
        self.offers.insert(offer_id.clone(), offer);
        Ok(())
    }

    fn offer_ref(&self, id: &OfferId) -> Res<&DiscountOffer> {
        self.offers.get(id).ok_or_else(|| ContractError::UnknownOffer(id.clone()))
    }

    fn respond_discount(&mut self, submitter: &ActorId, now: Tick, offer_id: &OfferId, accept: bool) -> Res {
        let o = self.offer_ref(offer_id)?;
        if submitter != &o.creditor {
            return Err(ContractError::WrongParty);
        }
        if o.state != OfferState::Offered {
            return Err(ContractError::InvalidState(format!("offer {offer_id} already answered")));
        }
        if now > o.expires_tick {
            return Err(ContractError::OfferExpired(offer_id.clone()));
        }
        if self.receivable_ref(&o.invoice)?.status != ReceivableStatus::Open {
            return Err(ContractError::ReceivableNotEligible(o.invoice.clone()));
        }
        self.offers.get_mut(offer_id).unwrap().state = if accept { OfferState::Accepted } else { OfferState::Rejected };
        Ok(())
    }

    fn settle_discount(&mut self, submitter: &ActorId, now: Tick, offer_id: &OfferId) -> Res {
        let o = self.offer_ref(offer_id)?;
        if submitter != &o.proposer && submitter != &o.creditor {
            return Err(ContractError::WrongParty);
        }
        if o.state != OfferState::Accepted {
            return Err(ContractError::InvalidState(format!("offer {offer_id} is not accepted")));
        }
        let r = self.receivable_ref(&o.invoice)?;
        if r.status != ReceivableStatus::Open {
            return Err(ContractError::ReceivableNotEligible(o.invoice.clone()));
        }
        let (debtor, creditor, amount, rid) =
            (r.debtor.clone(), r.creditor.clone(), o.settlement_amount, r.receivable_id.clone());
        self.require_funds(&debtor, amount)?;
        self.transfer(&debtor, &creditor, amount);
        let r = self.receivables.get_mut(&rid).unwrap();
        r.status = ReceivableStatus::Paid;
        r.paid_tick = Some(now);
        r.paid_amount = Some(amount);
        self.offers.get_mut(offer_id).unwrap().state = OfferState::Settled;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn propose_assignment(
        &mut self,
        submitter: &ActorId,
        assignment_id: &AssignmentId,
        receivable_id: &ReceivableId,
        assignee: &ActorId,
        advance_rate: Option<&Rational>,
        fee_rate: Option<&Rational>,
        kind: FinancingKind,
    ) -> Res {
        let r = self.receivable_ref(receivable_id)?;
        if submitter != &r.creditor {
            return Err(ContractError::WrongParty);
        }
        if r.status != ReceivableStatus::Open {
            return Err(ContractError::ReceivableNotEligible(receivable_id.clone()));
        }
        self.require_financier(assignee)?;
        if self.assignments.contains_key(assignment_id) {
            return Err(ContractError::DuplicateId(assignment_id.to_string()));
        }
        let advance_rate = advance_rate.copied().unwrap_or(self.params.advance_rate);
        let fee_rate = fee_rate.copied().unwrap_or(self.params.fee_rate);
        if advance_rate <= ratio(0, 1) || advance_rate > ratio(1, 1) {
            return Err(ContractError::InvalidParameter("advance rate must lie in (0, 1]".into()));
        }
        if fee_rate < ratio(0, 1) || fee_rate >= ratio(1, 1) {
            return Err(ContractError::InvalidParameter("fee rate must lie in [0, 1)".into()));
        }
        let advance_amount = floor_mul(&advance_rate, r.face_value);
        let fee_amount = floor_mul(&fee_rate, r.face_value);
        if fee_amount > advance_amount {
            return Err(ContractError::InvalidParameter("fee exceeds advance".into()));
        }
        let a = Assignment {
            assignment_id: assignment_id.clone(),
            receivable_id: receivable_id.clone(),
            creditor: r.creditor.clone(),
            assignee: assignee.clone(),
            advance_rate,
            fee_rate,
            kind,
            state: AssignmentState::Proposed,
            advance_amount,
            fee_amount,
        };
        self.assignments.insert(assignment_id.clone(), a);
        Ok(())
    }

    fn accept_assignment(&mut self, submitter: &ActorId, assignment_id: &AssignmentId) -> Res {
        let a = self
            .assignments
            .get(assignment_id)
            .ok_or_else(|| ContractError::UnknownAssignment(assignment_id.clone()))?;
        if submitter != &a.assignee {
            return Err(ContractError::WrongParty);
        }
        if a.state != AssignmentState::Proposed {
            return Err(ContractError::InvalidState(format!("assignment {assignment_id} already accepted")));
        }
        if self.receivable_ref(&a.receivable_id)?.status != ReceivableStatus::Open {
            return Err(ContractError::ReceivableNotEligible(a.receivable_id.clone()));
        }
        let net = a.net_advance();
        self.require_funds(&a.assignee, net)?;
        let (assignee, creditor, rid) = (a.assignee.clone(), a.creditor.clone(), a.receivable_id.clone());
        self.transfer(&assignee, &creditor, net);
        let r = self.receivables.get_mut(&rid).unwrap();
        r.status = ReceivableStatus::Assigned;
        r.beneficiary = assignee;
        self.assignments.get_mut(assignment_id).unwrap().state = AssignmentState::Accepted;
        Ok(())
    }

    fn declare_default(&mut self, now: Tick, id: &ReceivableId) -> Res {
        let grace = self.params.grace;
        let r = self.receivable_ref(id)?;
        match r.status {
            ReceivableStatus::Open | ReceivableStatus::Assigned => {}
            ReceivableStatus::Paid | ReceivableStatus::Defaulted => {
                return Err(ContractError::AlreadySettled(id.clone()))
            }
            ReceivableStatus::Securitized => return Err(ContractError::ReceivableNotEligible(id.clone())),
        }
        if now <= r.due_tick + grace {
            return Err(ContractError::InvalidState(format!("receivable {id} is within its grace period")));
        }
        let r = self.receivables.get_mut(id).unwrap();
        r.status = ReceivableStatus::Defaulted;
        r.defaulted_tick = Some(now);
        Ok(())
    }
}

impl Executor for Engine {
    type Error = ContractError;

    fn execute(&mut self, tx: &LedgerTransaction) -> Result<(), ContractError> {
        self.apply(&tx.submitter, tx.timestamp, &tx.payload)
    }
}
