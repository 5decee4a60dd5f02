use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crypto::{Ed25519, Hash, SignatureScheme};

use super::block::{endorsement_bytes, LedgerBlock, GENESIS_PROPOSER};
use super::{check_envelope, Network, Permission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Ok,
    Corrupt { height: u64 },
}

fn block_ok(block: &LedgerBlock, expected_height: u64, parent: &Hash, network: &Network) -> bool {
    if block.height != expected_height || block.parent_hash != *parent {
        return false;
    }
    if block.computed_hash() != block.block_hash {
        return false;
    }
    if expected_height == 0 {
        return block.txs.is_empty() && block.endorsements.is_empty() && block.proposer.as_str() == GENESIS_PROPOSER;
    }
    if block.txs.iter().any(|tx| check_envelope(network, tx).is_err()) {
        return false;
    }
    let msg = endorsement_bytes(&block.block_hash);
    let mut endorsers = BTreeSet::new();
    for e in &block.endorsements {
        let Some(node) = network.get(&e.node_id).filter(|n| n.can(Permission::Endorse)) else {
            return false;
        };
        if !endorsers.insert(&e.node_id) || !Ed25519.verify(&node.public_key, &msg, &e.signature) {
            return false;
        }
    }
    endorsers.len() >= network.quorum()
}

/// Recompute every hash, parent link, transaction envelope and quorum certificate.
/// Returns the first height at which anything fails.
pub fn verify_chain(blocks: &[LedgerBlock], network: &Network) -> ChainStatus {
    let mut parent = Hash::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        let height = i as u64;
        if !block_ok(block, height, &parent, network) {
            return ChainStatus::Corrupt { height };
        }
        parent = block.block_hash;
    }
    ChainStatus::Ok
}
