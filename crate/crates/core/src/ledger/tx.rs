use serde::{Deserialize, Serialize};

use crate::canonical::{Canonical, DecodeError, Decoder, Encoder};
use crate::contracts::ContractCall;
use crate::crypto::{sha256, Hash, SecretKey, Signature};
use crate::ids::{ActorId, Amount, ReceivableId, Tick};
use crate::indices::SiloRecord;

/// Fungible-token movements. Mint and burn are the fiat on/off ramps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TokenOp {
    Mint { to: ActorId, amount: Amount },
    Burn { from: ActorId, amount: Amount },
    Transfer { from: ActorId, to: ActorId, amount: Amount },
}

impl Canonical for TokenOp {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            TokenOp::Mint { to, amount } => {
                enc.u8(0);
                to.encode(enc);
                enc.u64(*amount);
            }
            TokenOp::Burn { from, amount } => {
                enc.u8(1);
                from.encode(enc);
                enc.u64(*amount);
            }
            TokenOp::Transfer { from, to, amount } => {
                enc.u8(2);
                from.encode(enc);
                to.encode(enc);
                enc.u64(*amount);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            0 => TokenOp::Mint { to: ActorId::decode(dec)?, amount: dec.u64()? },
            1 => TokenOp::Burn { from: ActorId::decode(dec)?, amount: dec.u64()? },
            2 => TokenOp::Transfer { from: ActorId::decode(dec)?, to: ActorId::decode(dec)?, amount: dec.u64()? },
            tag => return Err(DecodeError::UnknownTag { what: "TokenOp", tag }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    TradeCreditCreated {
        receivable_id: ReceivableId,
        creditor: ActorId,
        debtor: ActorId,
        face_value: Amount,
        due_tick: Tick,
    },
    PaymentMade {
        receivable_id: ReceivableId,
        payer: ActorId,
    },
    SnapshotPublished {
        record: SiloRecord,
    },
    ContractInvocation {
        call: ContractCall,
    },
    TokenTransfer {
        token: TokenOp,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    TradeCreditCreated,
    PaymentMade,
    SnapshotPublished,
    ContractInvocation,
    TokenTransfer,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 5] = [
        PayloadKind::TradeCreditCreated,
        PayloadKind::PaymentMade,
        PayloadKind::SnapshotPublished,
        PayloadKind::ContractInvocation,
        PayloadKind::TokenTransfer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::TradeCreditCreated => "trade_credit_created",
            PayloadKind::PaymentMade => "payment_made",
            PayloadKind::SnapshotPublished => "snapshot_published",
            PayloadKind::ContractInvocation => "contract_invocation",
            PayloadKind::TokenTransfer => "token_transfer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::TradeCreditCreated { .. } => PayloadKind::TradeCreditCreated,
            Payload::PaymentMade { .. } => PayloadKind::PaymentMade,
            Payload::SnapshotPublished { .. } => PayloadKind::SnapshotPublished,
            Payload::ContractInvocation { .. } => PayloadKind::ContractInvocation,
            Payload::TokenTransfer { .. } => PayloadKind::TokenTransfer,
        }
    }
}

impl Canonical for Payload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Payload::TradeCreditCreated { receivable_id, creditor, debtor, face_value, due_tick } => {
                enc.u8(0);
                receivable_id.encode(enc);
                creditor.encode(enc);
                debtor.encode(enc);
                enc.u64(*face_value).u64(*due_tick);
            }
            Payload::PaymentMade { receivable_id, payer } => {
                enc.u8(1);
                receivable_id.encode(enc);
                payer.encode(enc);
            }
            Payload::SnapshotPublished { record } => {
                enc.u8(2);
                enc.nested(|e| record.encode(e));
            }
            Payload::ContractInvocation { call } => {
                enc.u8(3);
                enc.nested(|e| call.encode(e));
            }
            Payload::TokenTransfer { token } => {
                enc.u8(4);
                enc.nested(|e| token.encode(e));
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            0 => Payload::TradeCreditCreated {
                receivable_id: ReceivableId::decode(dec)?,
                creditor: ActorId::decode(dec)?,
                debtor: ActorId::decode(dec)?,
                face_value: dec.u64()?,
                due_tick: dec.u64()?,
            },
            1 => Payload::PaymentMade { receivable_id: ReceivableId::decode(dec)?, payer: ActorId::decode(dec)? },
            2 => Payload::SnapshotPublished { record: dec.nested(SiloRecord::decode)? },
            3 => Payload::ContractInvocation { call: dec.nested(ContractCall::decode)? },
            4 => Payload::TokenTransfer { token: dec.nested(TokenOp::decode)? },
            tag => return Err(DecodeError::UnknownTag { what: "Payload", tag }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTransaction {
    pub tx_id: Hash,
    pub submitter: ActorId,
    pub payload: Payload,
    pub timestamp: Tick,
    pub signature: Signature,
}

/// Bytes covered by the submitter's signature.
pub fn signing_bytes(submitter: &ActorId, payload: &Payload, timestamp: Tick) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.str("scftwin/tx/v1");
    submitter.encode(&mut enc);
    enc.nested(|e| payload.encode(e));
    enc.u64(timestamp);
    enc.finish()
}

fn id_bytes(submitter: &ActorId, payload: &Payload, timestamp: Tick, signature: &Signature) -> Vec<u8> {
    let mut enc = Encoder::new();
    submitter.encode(&mut enc);
    enc.nested(|e| payload.encode(e));
    enc.u64(timestamp);
    enc.bytes(&signature.0);
    enc.finish()
}

impl LedgerTransaction {
    pub fn sign(submitter: ActorId, payload: Payload, timestamp: Tick, key: &SecretKey) -> Self {
        let signature = key.sign(&signing_bytes(&submitter, &payload, timestamp));
        Self::assemble(submitter, payload, timestamp, signature)
    }

    /// Build a transaction with a given signature, deriving its id.
    pub fn assemble(submitter: ActorId, payload: Payload, timestamp: Tick, signature: Signature) -> Self {
        let tx_id = sha256(&id_bytes(&submitter, &payload, timestamp, &signature));
        Self { tx_id, submitter, payload, timestamp, signature }
    }

    pub fn computed_id(&self) -> Hash {
        sha256(&id_bytes(&self.submitter, &self.payload, self.timestamp, &self.signature))
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes(&self.submitter, &self.payload, self.timestamp)
    }
}

impl Canonical for LedgerTransaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.tx_id.0);
        self.submitter.encode(enc);
        enc.nested(|e| self.payload.encode(e));
        enc.u64(self.timestamp);
        enc.bytes(&self.signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            tx_id: Hash(dec.array()?),
            submitter: ActorId::decode(dec)?,
            payload: dec.nested(Payload::decode)?,
            timestamp: dec.u64()?,
            signature: Signature(dec.array()?),
        })
    }
}
