//! Feeding a script through the platform.
//!
//! Each tick the driver submits, in order: cash top-ups for debtors about to pay,
//! the script's events for that tick, keeper calls settling or impairing deals, and at
//! most one securitization chosen from the latest recommendations. Everything is
//! committed as a single block. Decisions read committed or speculative ledger state
//! only, so driving is deterministic and resumes cleanly after a restart.

use std::collections::BTreeMap;

use crate::contracts::{ContractCall, DealState, ReceivableStatus};
use crate::health::Service;
use crate::ids::{ActorId, Amount, DealId, ReceivableId, Tick};
use crate::ledger::{Payload, Role, TokenOp};
use crate::platform::Platform;
use crate::rational::floor_mul;

use super::config::PolicyConfig;
use super::generate::Script;
use super::SimError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DriveStats {
    pub ticks: u64,
    pub blocks: u64,
    pub submitted: u64,
    /// Script events no longer applicable when their tick came (e.g. a default on a
    /// receivable that was securitized meanwhile).
    pub skipped: u64,
    pub deals: u64,
}

struct TickCx<'a> {
    p: &'a mut Platform,
    t: Tick,
    stats: &'a mut DriveStats,
}

impl TickCx<'_> {
    fn submit(&mut self, who: &ActorId, payload: Payload) -> Result<(), SimError> {
        self.p.submit(who, payload, self.t).map_err(|source| SimError::Platform { tick: self.t, source })?;
        self.stats.submitted += 1;
        Ok(())
    }

    fn accepts(&self, who: &ActorId, payload: &Payload) -> bool {
        let mut fork = self.p.ledger().speculative_state().clone();
        fork.apply(who, self.t, payload).is_ok()
    }

    fn top_up(&mut self, who: &ActorId, needed: Amount) -> Result<(), SimError> {
        let have = self.p.ledger().speculative_state().balance(who);
        if needed > have {
            let mint = Payload::TokenTransfer { token: TokenOp::Mint { to: who.clone(), amount: needed - have } };
            self.submit(who, mint)?;
        }
        Ok(())
    }
}

fn call(c: ContractCall) -> Payload {
    Payload::ContractInvocation { call: c }
}

/// Drive `script` from the tick after the platform's last committed tick to the end.
pub fn drive(script: &Script, policy: &PolicyConfig, platform: &mut Platform) -> Result<DriveStats, SimError> {
    let mut stats = DriveStats::default();
    let investors: Vec<ActorId> =
        script.members.iter().filter(|(_, r)| *r == Role::ExternalInvestor).map(|(a, _)| a.clone()).collect();
    let start = platform.engine().tick() + 1;
    for t in start..=script.ticks {
        stats.ticks += 1;
        let mut cx = TickCx { p: &mut *platform, t, stats: &mut stats };
        scripted(&mut cx, script)?;
        keeper(&mut cx)?;
        if policy.securitize && investors.len() >= 2 {
            securitize(&mut cx, policy, &investors)?;
        }
        if platform.commit().map_err(|source| SimError::Platform { tick: t, source })?.is_some() {
            stats.blocks += 1;
        }
    }
    Ok(stats)
}

fn scripted(cx: &mut TickCx<'_>, script: &Script) -> Result<(), SimError> {
    let engine = cx.p.ledger().speculative_state().clone();
    let payable = |id: &ReceivableId| {
        engine.receivable(id).is_some_and(|r| {
            matches!(r.status, ReceivableStatus::Open | ReceivableStatus::Securitized | ReceivableStatus::Assigned)
        })
    };
    let mut needs: BTreeMap<ActorId, Amount> = BTreeMap::new();
    for e in script.at(cx.t) {
        if let Payload::PaymentMade { receivable_id, payer } = &e.payload {
            if payable(receivable_id) {
                *needs.entry(payer.clone()).or_default() +=
                    engine.receivable(receivable_id).map_or(0, |r| r.face_value);
            }
        }
    }
    for (who, needed) in needs {
        cx.top_up(&who, needed)?;
    }
    for e in script.at(cx.t) {
        let applicable = match &e.payload {
            Payload::PaymentMade { receivable_id, .. } => payable(receivable_id),
            Payload::ContractInvocation { call: ContractCall::DeclareDefault { .. } } => {
                cx.accepts(&e.submitter, &e.payload)
            }
            _ => true,
        };
        if applicable {
            cx.submit(&e.submitter, e.payload.clone())?;
        } else {
            cx.stats.skipped += 1;
        }
    }
    Ok(())
}

fn keeper(cx: &mut TickCx<'_>) -> Result<(), SimError> {
    let open: Vec<(DealId, ActorId)> =
        cx.p.ledger()
            .speculative_state()
            .deals()
            .filter(|d| !matches!(d.state, DealState::Settled | DealState::Impaired))
            .map(|d| (d.deal_id.clone(), d.originator.clone()))
            .collect();
    for (deal_id, originator) in open {
        for c in [
            ContractCall::SettleSecuritization { deal_id: deal_id.clone() },
            ContractCall::MarkImpaired { deal_id: deal_id.clone() },
        ] {
            let payload = call(c);
            if cx.accepts(&originator, &payload) {
                cx.submit(&originator, payload)?;
                break;
            }
        }
    }
    Ok(())
}

fn securitize(cx: &mut TickCx<'_>, policy: &PolicyConfig, investors: &[ActorId]) -> Result<(), SimError> {
    let t = cx.t;
    let engine = cx.p.ledger().speculative_state().clone();
    let deal_count = engine.deals().count();
    let wanting: Vec<ActorId> = engine
        .stakeholders()
        .filter(|s| {
            cx.p.derived()
                .recommendations(s)
                .iter()
                .any(|r| r.services.contains(&Service::AccountReceivablesSecuritization))
        })
        .cloned()
        .collect();
    for s in wanting {
        let recent = engine
            .deals()
            .any(|d| d.originator == s && d.history.first().is_some_and(|(_, at)| at + policy.cooldown > t));
        if recent {
            continue;
        }
        let pool: Vec<(ReceivableId, Amount)> = engine
            .receivables()
            .filter(|r| r.creditor == s && r.status == ReceivableStatus::Open && r.due_tick > t)
            .take(policy.max_pool)
            .map(|r| (r.receivable_id.clone(), r.face_value))
            .collect();
        if pool.is_empty() {
            continue;
        }
        let face: Amount = pool.iter().map(|(_, f)| f).sum();
        let units = policy.abs_units.min(face);
        let spv = &investors[deal_count % investors.len()];
        let buyer = &investors[(deal_count + 1) % investors.len()];
        let deal_id = DealId::new(format!("D{t:05}-{s}"));
        cx.top_up(spv, floor_mul(&engine.params().advance_rate, face))?;
        cx.submit(
            &s,
            call(ContractCall::InitiateSecuritization {
                deal_id: deal_id.clone(),
                spv: spv.clone(),
                pool: pool.into_iter().map(|(id, _)| id).collect(),
                advance_rate: None,
                abs_units: units,
            }),
        )?;
        cx.stats.deals += 1;
        let buy = floor_mul(&policy.sell_fraction, units);
        if buy > 0 {
            cx.top_up(buyer, buy * (face / units))?;
            cx.submit(buyer, call(ContractCall::PurchaseAbs { deal_id, units: buy, price: None }))?;
        }
        return Ok(());
    }
    Ok(())
}
