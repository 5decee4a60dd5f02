//! Supply-chain-finance smart contracts and the fungible-token sub-ledger.
//!
//! The engine is a pure state machine `(state, tx) → state′` driven in commit order.
//! Securitization runs its full lifecycle (initiate → advance → issue → purchase →
//! settle | impair). Receivables discounting, factoring and inventory financing share
//! one assignment primitive; dynamic discounting is an offer/response/settlement triple.

mod distribution;
mod engine;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Decoder, Encoder};
use crate::ids::{ActorId, Amount, AssignmentId, DealId, OfferId, ReceivableId, Tick};
use crate::rational::Rational;

pub use distribution::largest_remainder;
pub use engine::{ContractParams, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceivableStatus {
    Open,
    Assigned,
    Securitized,
    Paid,
    Defaulted,
}

impl ReceivableStatus {
    pub const ALL: [ReceivableStatus; 5] = [
        ReceivableStatus::Open,
        ReceivableStatus::Assigned,
        ReceivableStatus::Securitized,
        ReceivableStatus::Paid,
        ReceivableStatus::Defaulted,
    ];

    /// Permitted status edges.
    pub fn can_become(self, next: ReceivableStatus) -> bool {
        use ReceivableStatus::*;
        matches!(
            (self, next),
            (Open, Assigned | Securitized | Paid | Defaulted) | (Securitized | Assigned, Paid | Defaulted)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receivable {
    pub receivable_id: ReceivableId,
    pub creditor: ActorId,
    pub debtor: ActorId,
    pub face_value: Amount,
    pub due_tick: Tick,
    pub status: ReceivableStatus,
    pub created_tick: Tick,
    /// Account that collects the debtor's payment: creditor, assignee or deal escrow.
    pub beneficiary: ActorId,
    pub deal: Option<DealId>,
    pub paid_tick: Option<Tick>,
    pub paid_amount: Option<Amount>,
    pub defaulted_tick: Option<Tick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealState {
    Proposed,
    Advanced,
    Issued,
    Settled,
    Impaired,
}

/// Units `[start, end)` owned by `owner`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRange {
    pub start: u64,
    pub end: u64,
    pub owner: ActorId,
}

impl UnitRange {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub owner: ActorId,
    pub units: u64,
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub tick: Tick,
    pub collected: Amount,
    pub payouts: Vec<Payout>,
    /// Unsold-unit share plus rounding, kept by the SPV.
    pub retained: Amount,
    /// Face value that was never collected.
    pub shortfall: Amount,
}

impl Distribution {
    pub fn distributed(&self) -> Amount {
        self.payouts.iter().map(|p| p.amount).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecuritizationDeal {
    pub deal_id: DealId,
    pub originator: ActorId,
    pub spv_id: ActorId,
    pub pool: Vec<ReceivableId>,
    pub pool_face_value: Amount,
    #[serde(with = "crate::rational::serde_str")]
    pub advance_rate: Rational,
    pub advance_paid: Amount,
    pub abs_units: u64,
    pub unit_notional: Amount,
    /// `pool_face_value − abs_units × unit_notional`, retained by the SPV.
    pub rounding_residual: Amount,
    pub holders: Vec<UnitRange>,
    pub state: DealState,
    #[serde(with = "crate::rational::serde_str")]
    pub risk_score: Rational,
    pub collected: Amount,
    pub proceeds: Amount,
    pub history: Vec<(DealState, Tick)>,
    pub distribution: Option<Distribution>,
}

impl SecuritizationDeal {
    pub fn units_sold(&self) -> u64 {
        self.holders.iter().map(UnitRange::len).sum()
    }

    pub fn units_unsold(&self) -> u64 {
        self.abs_units - self.units_sold()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferState {
    Offered,
    Accepted,
    Rejected,
    Settled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscountOffer {
    pub offer_id: OfferId,
    pub invoice: ReceivableId,
    #[serde(with = "crate::rational::serde_str")]
    pub discount_rate: Rational,
    pub proposer: ActorId,
    pub creditor: ActorId,
    pub expires_tick: Tick,
    pub state: OfferState,
    /// `face − ⌊rate × face⌋`.
    pub settlement_amount: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinancingKind {
    ReceivablesDiscounting,
    Factoring,
    InventoryFinancing,
}

impl FinancingKind {
    fn tag(self) -> u8 {
        match self {
            FinancingKind::ReceivablesDiscounting => 0,
            FinancingKind::Factoring => 1,
            FinancingKind::InventoryFinancing => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, DecodeError> {
        Ok(match tag {
            0 => FinancingKind::ReceivablesDiscounting,
            1 => FinancingKind::Factoring,
            2 => FinancingKind::InventoryFinancing,
            tag => return Err(DecodeError::UnknownTag { what: "FinancingKind", tag }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentState {
    Proposed,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: AssignmentId,
    pub receivable_id: ReceivableId,
    pub creditor: ActorId,
    pub assignee: ActorId,
    #[serde(with = "crate::rational::serde_str")]
    pub advance_rate: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub fee_rate: Rational,
    pub kind: FinancingKind,
    pub state: AssignmentState,
    pub advance_amount: Amount,
    pub fee_amount: Amount,
}

impl Assignment {
    /// What the creditor receives up front.
    pub fn net_advance(&self) -> Amount {
        self.advance_amount - self.fee_amount
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum ContractCall {
    InitiateSecuritization {
        deal_id: DealId,
        spv: ActorId,
        pool: Vec<ReceivableId>,
        #[serde(with = "crate::rational::serde_str_opt", default)]
        advance_rate: Option<Rational>,
        abs_units: u64,
    },
    PurchaseAbs {
        deal_id: DealId,
        units: u64,
        /// Negotiated total price; par (`units × unit_notional`) when absent.
        #[serde(default)]
        price: Option<Amount>,
    },
    SettleSecuritization {
        deal_id: DealId,
    },
    MarkImpaired {
        deal_id: DealId,
    },
    OfferDiscount {
        offer_id: OfferId,
        receivable_id: ReceivableId,
        #[serde(with = "crate::rational::serde_str")]
        discount_rate: Rational,
        /// Defaults to the receivable's due tick.
        #[serde(default)]
        expires_tick: Option<Tick>,
    },
    RespondDiscount {
        offer_id: OfferId,
        accept: bool,
    },
    SettleDiscount {
        offer_id: OfferId,
    },
    ProposeAssignment {
        assignment_id: AssignmentId,
        receivable_id: ReceivableId,
        assignee: ActorId,
        #[serde(with = "crate::rational::serde_str_opt", default)]
        advance_rate: Option<Rational>,
        #[serde(with = "crate::rational::serde_str_opt", default)]
        fee_rate: Option<Rational>,
        kind: FinancingKind,
    },
    AcceptAssignment {
        assignment_id: AssignmentId,
    },
    DeclareDefault {
        receivable_id: ReceivableId,
    },
}

fn encode_opt_rational(enc: &mut Encoder, r: &Option<Rational>) {
    enc.option(r.as_ref(), |e, r| {
        e.rational(r);
    });
}

impl Canonical for ContractCall {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            ContractCall::InitiateSecuritization { deal_id, spv, pool, advance_rate, abs_units } => {
                enc.u8(0);
                deal_id.encode(enc);
                spv.encode(enc);
                enc.list(pool, |e, r| r.encode(e));
                encode_opt_rational(enc, advance_rate);
                enc.u64(*abs_units);
            }
            ContractCall::PurchaseAbs { deal_id, units, price } => {
                enc.u8(1);
                deal_id.encode(enc);
                enc.u64(*units);
                enc.option(price.as_ref(), |e, p| {
                    e.u64(*p);
                });
            }
            ContractCall::SettleSecuritization { deal_id } => {
                enc.u8(2);
                deal_id.encode(enc);
            }
            ContractCall::MarkImpaired { deal_id } => {
                enc.u8(3);
                deal_id.encode(enc);
            }
            ContractCall::OfferDiscount { offer_id, receivable_id, discount_rate, expires_tick } => {
                enc.u8(4);
                offer_id.encode(enc);
                receivable_id.encode(enc);
                enc.rational(discount_rate);
                enc.option(expires_tick.as_ref(), |e, t| {
                    e.u64(*t);
                });
            }
            ContractCall::RespondDiscount { offer_id, accept } => {
                enc.u8(5);
                offer_id.encode(enc);
                enc.bool(*accept);
            }
            ContractCall::SettleDiscount { offer_id } => {
                enc.u8(6);
                offer_id.encode(enc);
            }
            ContractCall::ProposeAssignment {
                assignment_id,
                receivable_id,
                assignee,
                advance_rate,
                fee_rate,
                kind,
            } => {
                enc.u8(7);
                assignment_id.encode(enc);
                receivable_id.encode(enc);
                assignee.encode(enc);
                encode_opt_rational(enc, advance_rate);
                encode_opt_rational(enc, fee_rate);
                enc.u8(kind.tag());
            }
            ContractCall::AcceptAssignment { assignment_id } => {
                enc.u8(8);
                assignment_id.encode(enc);
            }
            ContractCall::DeclareDefault { receivable_id } => {
                enc.u8(9);
                receivable_id.encode(enc);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            0 => ContractCall::InitiateSecuritization {
                deal_id: DealId::decode(dec)?,
                spv: ActorId::decode(dec)?,
                pool: dec.list(ReceivableId::decode)?,
                advance_rate: dec.option(|d| d.rational())?,
                abs_units: dec.u64()?,
            },
            1 => ContractCall::PurchaseAbs {
                deal_id: DealId::decode(dec)?,
                units: dec.u64()?,
                price: dec.option(|d| d.u64())?,
            },
            2 => ContractCall::SettleSecuritization { deal_id: DealId::decode(dec)? },
            3 => ContractCall::MarkImpaired { deal_id: DealId::decode(dec)? },
            4 => ContractCall::OfferDiscount {
                offer_id: OfferId::decode(dec)?,
                receivable_id: ReceivableId::decode(dec)?,
                discount_rate: dec.rational()?,
                expires_tick: dec.option(|d| d.u64())?,
            },
            5 => ContractCall::RespondDiscount { offer_id: OfferId::decode(dec)?, accept: dec.bool()? },
            6 => ContractCall::SettleDiscount { offer_id: OfferId::decode(dec)? },
            7 => ContractCall::ProposeAssignment {
                assignment_id: AssignmentId::decode(dec)?,
                receivable_id: ReceivableId::decode(dec)?,
                assignee: ActorId::decode(dec)?,
                advance_rate: dec.option(|d| d.rational())?,
                fee_rate: dec.option(|d| d.rational())?,
                kind: FinancingKind::from_tag(dec.u8()?)?,
            },
            8 => ContractCall::AcceptAssignment { assignment_id: AssignmentId::decode(dec)? },
            9 => ContractCall::DeclareDefault { receivable_id: ReceivableId::decode(dec)? },
            tag => return Err(DecodeError::UnknownTag { what: "ContractCall", tag }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("unknown or ineligible party {0}")]
    UnknownParty(ActorId),
    #[error("value must be positive")]
    NonPositiveValue,
    #[error("due tick {due} is not after the current tick {now}")]
    PastDue { due: Tick, now: Tick },
    #[error("insufficient funds: {account} holds {available}, needs {needed}")]
    InsufficientFunds { account: ActorId, needed: Amount, available: Amount },
    #[error("only the debtor may pay")]
    WrongPayer,
    #[error("receivable {0} is already settled")]
    AlreadySettled(ReceivableId),
    #[error("receivable {0} is not eligible")]
    ReceivableNotEligible(ReceivableId),
    #[error("SPV {spv} holds {available}, advance needs {needed}")]
    SpvUnderfunded { spv: ActorId, needed: Amount, available: Amount },
    #[error("empty pool")]
    EmptyPool,
    #[error("requested {requested} units, {available} unsold")]
    Oversubscribed { requested: u64, available: u64 },
    #[error("deal {0} has uncollected receivables")]
    NotYetCollectable(DealId),
    #[error("deal {0} cannot be impaired yet")]
    NotImpairable(DealId),
    #[error("caller is not the party entitled to this action")]
    WrongParty,
    #[error("offer {0} has expired")]
    OfferExpired(OfferId),
    #[error("unknown receivable {0}")]
    UnknownReceivable(ReceivableId),
    #[error("unknown deal {0}")]
    UnknownDeal(DealId),
    #[error("unknown offer {0}")]
    UnknownOffer(OfferId),
    #[error("unknown assignment {0}")]
    UnknownAssignment(AssignmentId),
    #[error("id {0} already exists")]
    DuplicateId(String),
    #[error("timestamp {tx} precedes the engine clock {now}")]
    StaleTimestamp { tx: Tick, now: Tick },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
}

impl ContractError {
    /// Stable name carried in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::UnknownParty(_) => "UnknownParty",
            ContractError::NonPositiveValue => "NonPositiveValue",
            ContractError::PastDue { .. } => "PastDue",
            ContractError::InsufficientFunds { .. } => "InsufficientFunds",
            ContractError::WrongPayer => "WrongPayer",
            ContractError::AlreadySettled(_) => "AlreadySettled",
            ContractError::ReceivableNotEligible(_) => "ReceivableNotEligible",
            ContractError::SpvUnderfunded { .. } => "SpvUnderfunded",
            ContractError::EmptyPool => "EmptyPool",
            ContractError::Oversubscribed { .. } => "Oversubscribed",
            ContractError::NotYetCollectable(_) => "NotYetCollectable",
            ContractError::NotImpairable(_) => "NotImpairable",
            ContractError::WrongParty => "WrongParty",
            ContractError::OfferExpired(_) => "OfferExpired",
            ContractError::UnknownReceivable(_) => "UnknownReceivable",
            ContractError::UnknownDeal(_) => "UnknownDeal",
            ContractError::UnknownOffer(_) => "UnknownOffer",
            ContractError::UnknownAssignment(_) => "UnknownAssignment",
            ContractError::DuplicateId(_) => "DuplicateId",
            ContractError::StaleTimestamp { .. } => "StaleTimestamp",
            ContractError::InvalidParameter(_) => "InvalidParameter",
            ContractError::InvalidState(_) => "InvalidState",
            ContractError::InvalidSnapshot(_) => "InvalidSnapshot",
        }
    }
}

impl fmt::Display for ReceivableStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReceivableStatus::Open => "open",
            ReceivableStatus::Assigned => "assigned",
            ReceivableStatus::Securitized => "securitized",
            ReceivableStatus::Paid => "paid",
            ReceivableStatus::Defaulted => "defaulted",
        };
        f.write_str(s)
    }
}
