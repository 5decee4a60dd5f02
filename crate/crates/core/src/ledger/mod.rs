//! Permissioned, append-only, hash-chained ledger.
//!
//! Stakeholder validators endorse blocks; a block commits once it carries
//! `⌊2n/3⌋ + 1` valid endorsements. Committed transactions are applied to a replicated
//! state machine (the [`Executor`]), in block order.

mod block;
mod consensus;
mod tx;
mod verify;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Ed25519, Hash, Keyring, PublicKey, SecretKey, SignatureScheme};
use crate::ids::ActorId;

pub use block::{compute_block_hash, endorsement_bytes, Endorsement, LedgerBlock, GENESIS_PROPOSER};
pub use consensus::{
    quorum, Behavior, CommitError, CommitReport, ConsensusError, EndorsementSchedule, InvalidProposal,
};
pub use tx::{signing_bytes, LedgerTransaction, Payload, PayloadKind, TokenOp};
pub use verify::{verify_chain, ChainStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    StakeholderValidator,
    ExternalObserver,
    ExternalInvestor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Permission {
    Submit,
    Endorse,
    Read,
    InvokeContract,
}

impl Role {
    pub fn permissions(self) -> BTreeSet<Permission> {
        use Permission::*;
        match self {
            Role::StakeholderValidator => [Submit, Endorse, Read, InvokeContract].into(),
            Role::ExternalObserver => [Read].into(),
            Role::ExternalInvestor => [Read, InvokeContract].into(),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::StakeholderValidator => "stakeholder-validator",
            Role::ExternalObserver => "external-observer",
            Role::ExternalInvestor => "external-investor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeIdentity {
    pub node_id: ActorId,
    pub role: Role,
    pub public_key: PublicKey,
}

impl NodeIdentity {
    pub fn permissions(&self) -> BTreeSet<Permission> {
        self.role.permissions()
    }

    pub fn can(&self, p: Permission) -> bool {
        self.role.permissions().contains(&p)
    }
}

/// Permission a payload kind requires from its submitter.
pub fn required_permission(kind: PayloadKind) -> Permission {
    match kind {
        PayloadKind::ContractInvocation | PayloadKind::TokenTransfer => Permission::InvokeContract,
        PayloadKind::TradeCreditCreated | PayloadKind::PaymentMade | PayloadKind::SnapshotPublished => {
            Permission::Submit
        }
    }
}

/// Static membership of the permissioned network.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    nodes: BTreeMap<ActorId, NodeIdentity>,
}

impl Network {
    pub fn new(nodes: impl IntoIterator<Item = NodeIdentity>) -> Self {
        Self { nodes: nodes.into_iter().map(|n| (n.node_id.clone(), n)).collect() }
    }

    pub fn get(&self, id: &ActorId) -> Option<&NodeIdentity> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeIdentity> {
        self.nodes.values()
    }

    /// Endorsing nodes in id order, which is also the round-robin proposer order.
    pub fn validators(&self) -> Vec<&NodeIdentity> {
        self.nodes.values().filter(|n| n.can(Permission::Endorse)).collect()
    }

    pub fn quorum(&self) -> usize {
        quorum(self.validators().len())
    }

    /// Network and keyring with every key derived from `seed`.
    pub fn provision(seed: &[u8], members: impl IntoIterator<Item = (ActorId, Role)>) -> (Network, Keyring) {
        let mut keys = Keyring::default();
        let mut nodes = Vec::new();
        for (id, role) in members {
            let key = SecretKey::derive(seed, &id);
            nodes.push(NodeIdentity { node_id: id.clone(), role, public_key: key.public_key() });
            keys.insert(id, key);
        }
        (Network::new(nodes), keys)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("unknown submitter {0}")]
    UnknownSubmitter(ActorId),
    #[error("{node} lacks {permission:?} permission")]
    PermissionDenied { node: ActorId, permission: Permission },
    #[error("transaction id does not match its contents")]
    BadTxId,
    #[error("invalid signature")]
    InvalidSignature,
}

/// Identity, permission, id and signature checks for one transaction.
pub fn check_envelope(network: &Network, tx: &LedgerTransaction) -> Result<(), EnvelopeError> {
    let node = network.get(&tx.submitter).ok_or_else(|| EnvelopeError::UnknownSubmitter(tx.submitter.clone()))?;
    let permission = required_permission(tx.payload.kind());
    if !node.can(permission) {
        return Err(EnvelopeError::PermissionDenied { node: node.node_id.clone(), permission });
    }
    if tx.computed_id() != tx.tx_id {
        return Err(EnvelopeError::BadTxId);
    }
    if !Ed25519.verify(&node.public_key, &tx.signing_bytes(), &tx.signature) {
        return Err(EnvelopeError::InvalidSignature);
    }
    Ok(())
}

/// Deterministic state machine fed by committed transactions.
///
/// `execute` must be atomic: on error the state is left untouched.
pub trait Executor: Clone {
    type Error: std::error::Error + Clone + 'static;

    fn execute(&mut self, tx: &LedgerTransaction) -> Result<(), Self::Error>;
}

/// Executor accepting everything; useful for exercising the chain on its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NullExecutor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unreachable")]
pub enum Never {}

impl Executor for NullExecutor {
    type Error = Never;

    fn execute(&mut self, _tx: &LedgerTransaction) -> Result<(), Never> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError<E: std::error::Error> {
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("invalid signature")]
    InvalidSignature,
    #[error("duplicate transaction {0}")]
    DuplicateTx(Hash),
    #[error("rejected by contract engine: {0}")]
    Rejected(E),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("permission denied: {0} cannot read the ledger")]
    PermissionDenied(ActorId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadFilter {
    pub kind: Option<PayloadKind>,
    /// Matches transactions signed by this node.
    pub stakeholder: Option<ActorId>,
    pub from_height: Option<u64>,
    pub to_height: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Ledger<E> {
    network: Network,
    blocks: Vec<LedgerBlock>,
    committed: E,
    speculative: E,
    pending: Vec<LedgerTransaction>,
    pending_ids: HashSet<Hash>,
    committed_ids: HashSet<Hash>,
}

impl<E: Executor> Ledger<E> {
    pub fn new(network: Network, initial: E) -> Self {
        Self {
            network,
            blocks: vec![LedgerBlock::genesis()],
            speculative: initial.clone(),
            committed: initial,
            pending: Vec::new(),
            pending_ids: HashSet::new(),
            committed_ids: HashSet::new(),
        }
    }

    /// Rebuild a ledger from verified `blocks` (genesis first) and the state they produce.
    /// The caller vouches for `state`; use it for checkpoint restores.
    pub fn restore(network: Network, blocks: Vec<LedgerBlock>, state: E) -> Self {
        assert!(blocks.first().is_some_and(|b| b.height == 0), "restored chain must start at genesis");
        let committed_ids = blocks.iter().flat_map(|b| b.txs.iter().map(|t| t.tx_id)).collect();
        Self {
            network,
            blocks,
            speculative: state.clone(),
            committed: state,
            pending: Vec::new(),
            pending_ids: HashSet::new(),
            committed_ids,
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn blocks(&self) -> &[LedgerBlock] {
        &self.blocks
    }

    pub fn tip(&self) -> &LedgerBlock {
        self.blocks.last().expect("ledger always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    /// Committed state.
    pub fn state(&self) -> &E {
        &self.committed
    }

    /// Committed state with the pending pool applied in order.
    pub fn speculative_state(&self) -> &E {
        &self.speculative
    }

    pub fn pending(&self) -> &[LedgerTransaction] {
        &self.pending
    }

    pub fn is_committed(&self, tx_id: &Hash) -> bool {
        self.committed_ids.contains(tx_id)
    }

    pub fn submit_transaction(
        &mut self,
        tx: LedgerTransaction,
        from: &NodeIdentity,
    ) -> Result<Hash, SubmitError<E::Error>> {
        match self.network.get(&from.node_id) {
            Some(registered) if registered == from && from.node_id == tx.submitter => {}
            _ => {
                return Err(SubmitError::PermissionDenied(format!(
                    "{} is not the registered submitter of this transaction",
                    from.node_id
                )))
            }
        }
        check_envelope(&self.network, &tx).map_err(|e| match e {
            EnvelopeError::BadTxId | EnvelopeError::InvalidSignature => SubmitError::InvalidSignature,
            other => SubmitError::PermissionDenied(other.to_string()),
        })?;
        if self.pending_ids.contains(&tx.tx_id) || self.committed_ids.contains(&tx.tx_id) {
            return Err(SubmitError::DuplicateTx(tx.tx_id));
        }
        self.speculative.execute(&tx).map_err(SubmitError::Rejected)?;
        let id = tx.tx_id;
        self.pending_ids.insert(id);
        self.pending.push(tx);
        Ok(id)
    }

    pub fn read_ledger(&self, filter: &ReadFilter, caller: &ActorId) -> Result<Vec<&LedgerTransaction>, LedgerError> {
        match self.network.get(caller) {
            Some(node) if node.can(Permission::Read) => {}
            _ => return Err(LedgerError::PermissionDenied(caller.clone())),
        }
        Ok(filter_blocks(&self.blocks, filter))
    }

    fn rebuild_speculative(&mut self) {
        let mut spec = self.committed.clone();
        let mut kept = Vec::with_capacity(self.pending.len());
        for tx in self.pending.drain(..) {
            if spec.execute(&tx).is_ok() {
                kept.push(tx);
            } else {
                self.pending_ids.remove(&tx.tx_id);
            }
        }
        self.pending = kept;
        self.speculative = spec;
    }
}

/// Committed transactions matching `filter`, in (height, index) order.
pub fn filter_blocks<'a>(blocks: &'a [LedgerBlock], filter: &ReadFilter) -> Vec<&'a LedgerTransaction> {
    let lo = filter.from_height.unwrap_or(0);
    let hi = filter.to_height.unwrap_or(u64::MAX);
    blocks
        .iter()
        .filter(|b| b.height >= lo && b.height <= hi)
        .flat_map(|b| b.txs.iter())
        .filter(|tx| filter.kind.is_none_or(|k| tx.payload.kind() == k))
        .filter(|tx| filter.stakeholder.as_ref().is_none_or(|s| &tx.submitter == s))
        .collect()
}
