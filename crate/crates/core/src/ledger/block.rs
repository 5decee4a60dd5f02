use serde::{Deserialize, Serialize};

use crate::canonical::{Canonical, DecodeError, Decoder, Encoder};
use crate::crypto::{sha256, Hash, Signature};
use crate::ids::ActorId;

use super::tx::LedgerTransaction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub node_id: ActorId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerBlock {
    pub height: u64,
    pub parent_hash: Hash,
    pub txs: Vec<LedgerTransaction>,
    pub proposer: ActorId,
    pub endorsements: Vec<Endorsement>,
    pub block_hash: Hash,
}

/// `hash(height ‖ parent_hash ‖ canonical tx list ‖ proposer)`.
pub fn compute_block_hash(height: u64, parent: &Hash, txs: &[LedgerTransaction], proposer: &ActorId) -> Hash {
    let mut enc = Encoder::new();
    enc.u64(height);
    enc.bytes(&parent.0);
    enc.list(txs, |e, tx| tx.encode(e));
    proposer.encode(&mut enc);
    sha256(&enc.finish())
}

/// Bytes a validator signs to endorse a block.
pub fn endorsement_bytes(block_hash: &Hash) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.str("scftwin/endorse/v1");
    enc.bytes(&block_hash.0);
    enc.finish()
}

pub const GENESIS_PROPOSER: &str = "genesis";

impl LedgerBlock {
    pub fn new(height: u64, parent_hash: Hash, txs: Vec<LedgerTransaction>, proposer: ActorId) -> Self {
        let block_hash = compute_block_hash(height, &parent_hash, &txs, &proposer);
        Self { height, parent_hash, txs, proposer, endorsements: Vec::new(), block_hash }
    }

    pub fn genesis() -> Self {
        Self::new(0, Hash::ZERO, Vec::new(), ActorId::new(GENESIS_PROPOSER))
    }

    pub fn computed_hash(&self) -> Hash {
        compute_block_hash(self.height, &self.parent_hash, &self.txs, &self.proposer)
    }

    /// Largest transaction timestamp, the block's logical tick.
    pub fn tick(&self) -> u64 {
        self.txs.iter().map(|t| t.timestamp).max().unwrap_or(0)
    }
}

impl Canonical for LedgerBlock {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height);
        enc.bytes(&self.parent_hash.0);
        enc.list(&self.txs, |e, tx| tx.encode(e));
        self.proposer.encode(enc);
        enc.list(&self.endorsements, |e, en| {
            en.node_id.encode(e);
            e.bytes(&en.signature.0);
        });
        enc.bytes(&self.block_hash.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            height: dec.u64()?,
            parent_hash: Hash(dec.array()?),
            txs: dec.list(LedgerTransaction::decode)?,
            proposer: ActorId::decode(dec)?,
            endorsements: dec
                .list(|d| Ok(Endorsement { node_id: ActorId::decode(d)?, signature: Signature(d.array()?) }))?,
            block_hash: Hash(dec.array()?),
        })
    }
}
