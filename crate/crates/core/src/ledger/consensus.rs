//! Single-round endorsement protocol.
//!
//! The proposer for height `h` is `validators[h mod n]`. Honest validators endorse a
//! proposal only if every transaction in it is well-formed and executes against the
//! committed state; Byzantine validators endorse anything; silent ones never answer.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::crypto::{Ed25519, Hash, Keyring, SignatureScheme};
use crate::ids::ActorId;

use super::block::{endorsement_bytes, Endorsement, LedgerBlock};
use super::tx::LedgerTransaction;
use super::{check_envelope, Executor, Ledger};

/// `⌊2n/3⌋ + 1`.
pub fn quorum(n: usize) -> usize {
    2 * n / 3 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    Silent,
    Byzantine,
}

/// Per-validator behaviour for one round; validators not listed are honest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EndorsementSchedule {
    behaviors: BTreeMap<ActorId, Behavior>,
}

impl EndorsementSchedule {
    pub fn all_honest() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: impl Into<ActorId>, behavior: Behavior) -> Self {
        self.behaviors.insert(node.into(), behavior);
        self
    }

    pub fn behavior(&self, node: &ActorId) -> Behavior {
        self.behaviors.get(node).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidProposal {
    #[error("proposal height {found}, expected {expected}")]
    WrongHeight { expected: u64, found: u64 },
    #[error("parent hash does not match the tip")]
    WrongParent,
    #[error("{found} is not the proposer for this height ({expected} is)")]
    WrongProposer { expected: ActorId, found: ActorId },
    #[error("block hash does not match contents")]
    HashMismatch,
    #[error("empty proposal")]
    Empty,
    #[error("proposal carries endorsements")]
    PreEndorsed,
    #[error("transaction {index}: {reason}")]
    BadTransaction { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitError {
    #[error("invalid block: {0}")]
    Invalid(#[from] InvalidProposal),
    #[error("endorsement from {0} is invalid")]
    BadEndorsement(ActorId),
    #[error("{valid} valid endorsements, quorum is {quorum}")]
    InsufficientEndorsements { valid: usize, quorum: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("no pending transactions")]
    NothingPending,
    #[error("validator set is empty")]
    NoValidators,
    #[error("proposer {0} did not propose")]
    ProposerSilent(ActorId),
    #[error("no key available for validator {0}")]
    MissingKey(ActorId),
    #[error("no quorum at height {height}: {endorsements} endorsements, {quorum} needed")]
    NoQuorum { height: u64, endorsements: usize, quorum: usize, refusals: Vec<(ActorId, InvalidProposal)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitReport {
    pub height: u64,
    pub block_hash: Hash,
    pub included: usize,
    /// Pending transactions the proposer dropped because they no longer execute.
    pub dropped: Vec<(Hash, String)>,
}

impl<E: Executor> Ledger<E> {
    pub fn next_height(&self) -> u64 {
        self.height() + 1
    }

    pub fn expected_proposer(&self, height: u64) -> Option<ActorId> {
        let validators = self.network.validators();
        if validators.is_empty() {
            return None;
        }
        Some(validators[(height % validators.len() as u64) as usize].node_id.clone())
    }

    pub fn build_block(&self, proposer: &ActorId, txs: Vec<LedgerTransaction>) -> LedgerBlock {
        LedgerBlock::new(self.next_height(), self.tip().block_hash, txs, proposer.clone())
    }

    /// The honest validator's check. Returns the state after executing the block.
    pub fn validate_proposal(&self, block: &LedgerBlock) -> Result<E, InvalidProposal> {
        let expected = self.next_height();
        if block.height != expected {
            return Err(InvalidProposal::WrongHeight { expected, found: block.height });
        }
        if block.parent_hash != self.tip().block_hash {
            return Err(InvalidProposal::WrongParent);
        }
        let proposer = self.expected_proposer(expected);
        if proposer.as_ref() != Some(&block.proposer) {
            return Err(InvalidProposal::WrongProposer {
                expected: proposer.unwrap_or_else(|| ActorId::new("")),
                found: block.proposer.clone(),
            });
        }
        if block.computed_hash() != block.block_hash {
            return Err(InvalidProposal::HashMismatch);
        }
        if block.txs.is_empty() {
            return Err(InvalidProposal::Empty);
        }
        let mut state = self.committed.clone();
        let mut seen = HashSet::new();
        for (index, tx) in block.txs.iter().enumerate() {
            let bad = |reason: String| InvalidProposal::BadTransaction { index, reason };
            check_envelope(&self.network, tx).map_err(|e| bad(e.to_string()))?;
            if self.committed_ids.contains(&tx.tx_id) || !seen.insert(tx.tx_id) {
                return Err(bad("duplicate transaction".into()));
            }
            state.execute(tx).map_err(|e| bad(e.to_string()))?;
        }
        Ok(state)
    }

    pub fn endorse(block: &LedgerBlock, validator: &ActorId, keys: &Keyring) -> Option<Endorsement> {
        let key = keys.get(validator)?;
        Some(Endorsement { node_id: validator.clone(), signature: key.sign(&endorsement_bytes(&block.block_hash)) })
    }

    /// Count endorsements from distinct validators with valid signatures.
    pub fn check_endorsements(&self, block: &LedgerBlock) -> Result<usize, CommitError> {
        let mut seen = BTreeSet::new();
        let msg = endorsement_bytes(&block.block_hash);
        for e in &block.endorsements {
            let node = self
                .network
                .get(&e.node_id)
                .filter(|n| n.can(super::Permission::Endorse))
                .ok_or_else(|| CommitError::BadEndorsement(e.node_id.clone()))?;
            if !seen.insert(e.node_id.clone()) || !Ed25519.verify(&node.public_key, &msg, &e.signature) {
                return Err(CommitError::BadEndorsement(e.node_id.clone()));
            }
        }
        let quorum = self.network.quorum();
        if seen.len() < quorum {
            return Err(CommitError::InsufficientEndorsements { valid: seen.len(), quorum });
        }
        Ok(seen.len())
    }

    /// Append an endorsed block after checking its quorum certificate and contents.
    pub fn commit_block(&mut self, block: LedgerBlock) -> Result<&LedgerBlock, CommitError> {
        self.check_endorsements(&block)?;
        let state = self.validate_proposal(&block)?;
        self.install(block, state);
        Ok(self.tip())
    }

    fn install(&mut self, block: LedgerBlock, state: E) {
        for tx in &block.txs {
            self.pending_ids.remove(&tx.tx_id);
            self.committed_ids.insert(tx.tx_id);
        }
        let included: HashSet<Hash> = block.txs.iter().map(|t| t.tx_id).collect();
        self.pending.retain(|t| !included.contains(&t.tx_id));
        self.committed = state;
        self.blocks.push(block);
        self.rebuild_speculative();
    }

    /// Run one round: the scheduled proposer packs the pending pool, validators endorse
    /// per `schedule`, and the block commits if a quorum endorsed it.
    pub fn propose_and_commit_block(
        &mut self,
        keys: &Keyring,
        schedule: &EndorsementSchedule,
    ) -> Result<CommitReport, ConsensusError> {
        if self.pending.is_empty() {
            return Err(ConsensusError::NothingPending);
        }
        let height = self.next_height();
        let proposer = self.expected_proposer(height).ok_or(ConsensusError::NoValidators)?;
        if schedule.behavior(&proposer) == Behavior::Silent {
            return Err(ConsensusError::ProposerSilent(proposer));
        }

        // Honest packing: keep the pending transactions that still execute in order.
        let mut state = self.committed.clone();
        let mut txs = Vec::new();
        let mut dropped = Vec::new();
        for tx in &self.pending {
            match state.execute(tx) {
                Ok(()) => txs.push(tx.clone()),
                Err(e) => dropped.push((tx.tx_id, e.to_string())),
            }
        }
        if !dropped.is_empty() {
            let gone: HashSet<Hash> = dropped.iter().map(|(id, _)| *id).collect();
            self.pending.retain(|t| !gone.contains(&t.tx_id));
            self.pending_ids.retain(|id| !gone.contains(id));
        }
        if txs.is_empty() {
            self.rebuild_speculative();
            return Err(ConsensusError::NothingPending);
        }

        let mut block = self.build_block(&proposer, txs);
        let verdict = self.validate_proposal(&block);
        let mut refusals = Vec::new();
        for v in self.network.validators() {
            let sign = match schedule.behavior(&v.node_id) {
                Behavior::Silent => false,
                Behavior::Byzantine => true,
                Behavior::Honest => match &verdict {
                    Ok(_) => true,
                    Err(e) => {
                        refusals.push((v.node_id.clone(), e.clone()));
                        false
                    }
                },
            };
            if sign {
                let e = Self::endorse(&block, &v.node_id, keys)
                    .ok_or_else(|| ConsensusError::MissingKey(v.node_id.clone()))?;
                block.endorsements.push(e);
            }
        }
        let quorum = self.network.quorum();
        let state = match verdict {
            Ok(state) if block.endorsements.len() >= quorum => state,
            _ => {
                return Err(ConsensusError::NoQuorum {
                    height,
                    endorsements: block.endorsements.len(),
                    quorum,
                    refusals,
                })
            }
        };
        let report = CommitReport { height, block_hash: block.block_hash, included: block.txs.len(), dropped };
        self.install(block, state);
        Ok(report)
    }
}
