//! The running twin: ledger with its contract engine, plus state derived from committed
//! blocks (index history, alerts, recommendations, knowledge graph, conservation log).
//!
//! Derived state is a pure function of the chain. It is updated once per committed
//! block at the block's tick, so replaying the same blocks rebuilds it exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::contracts::{ContractError, ContractParams, DealState, Engine};
use crate::crypto::{sha256, Hash, Keyring};
use crate::health::{
    monitor_report, recommend_services, score_risk, Alert, AlertKind, MonitorConfig, OlsPredictor, Recommendation,
    RiskScore, Severity,
};
use crate::ids::{ActorId, Amount, DealId, Tick};
use crate::indices::{IndexName, IndexReport};
use crate::knowledge::{KnowledgeBase, Predicate};
use crate::ledger::{
    CommitError, ConsensusError, EndorsementSchedule, Ledger, LedgerBlock, LedgerTransaction, Network, Payload, Role,
    SubmitError,
};
use crate::rational::{ratio, Rational};
use crate::store::{self, Checkpoint, Store, StoreError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlatformError {
    #[error("unknown member {0}")]
    UnknownMember(ActorId),
    #[error(transparent)]
    Submit(#[from] SubmitError<ContractError>),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("invariant violated after block {height}: {detail}")]
    Invariant { height: u64, detail: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Everything needed to rebuild a platform from its log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformSpec {
    /// Seed from which every member's signing key is derived.
    pub network_seed: String,
    pub members: Vec<(ActorId, Role)>,
    #[serde(default)]
    pub params: ContractParams,
    #[serde(default)]
    pub monitor: MonitorConfig,
    /// Exposure fraction above which contagion is flagged.
    #[serde(with = "crate::rational::serde_str", default = "default_theta")]
    pub theta: Rational,
    /// Blocks between checkpoints; 0 disables them.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn default_theta() -> Rational {
    ratio(1, 4)
}

fn default_checkpoint_every() -> u64 {
    25
}

impl PlatformSpec {
    pub fn new(network_seed: impl Into<String>, members: Vec<(ActorId, Role)>) -> Self {
        Self {
            network_seed: network_seed.into(),
            members,
            params: ContractParams::default(),
            monitor: MonitorConfig::default(),
            theta: default_theta(),
            checkpoint_every: default_checkpoint_every(),
        }
    }

    pub fn provision(&self) -> (Network, Keyring) {
        Network::provision(self.network_seed.as_bytes(), self.members.iter().cloned())
    }

    pub fn network(&self) -> Network {
        self.provision().0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    /// Blocks after which supply and balances were checked.
    pub checks: u64,
    /// Running hash over (tick, supply, sum of balances) per checked block.
    pub checksum: Hash,
}

/// State computed from committed blocks only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub kb: KnowledgeBase,
    /// Per stakeholder, one report per committed block (oldest first).
    history: BTreeMap<ActorId, Vec<IndexReport>>,
    /// Alerts in the order they were raised.
    alert_log: Vec<Alert>,
    active: BTreeMap<ActorId, Vec<Alert>>,
    declining: BTreeMap<ActorId, Vec<IndexName>>,
    recommendations: BTreeMap<ActorId, Vec<Recommendation>>,
    conservation: Conservation,
    height: u64,
}

impl Derived {
    pub fn new(theta: Rational) -> Self {
        Self {
            kb: KnowledgeBase::new(theta),
            history: BTreeMap::new(),
            alert_log: Vec::new(),
            active: BTreeMap::new(),
            declining: BTreeMap::new(),
            recommendations: BTreeMap::new(),
            conservation: Conservation { checks: 0, checksum: Hash::ZERO },
            height: 0,
        }
    }

    pub fn history(&self, stakeholder: &ActorId) -> &[IndexReport] {
        self.history.get(stakeholder).map_or(&[], Vec::as_slice)
    }

    pub fn latest_report(&self, stakeholder: &ActorId) -> Option<&IndexReport> {
        self.history(stakeholder).last()
    }

    pub fn alert_log(&self) -> &[Alert] {
        &self.alert_log
    }

    pub fn active_alerts(&self, stakeholder: &ActorId) -> &[Alert] {
        self.active.get(stakeholder).map_or(&[], Vec::as_slice)
    }

    pub fn declining(&self, stakeholder: &ActorId) -> &[IndexName] {
        self.declining.get(stakeholder).map_or(&[], Vec::as_slice)
    }

    pub fn recommendations(&self, stakeholder: &ActorId) -> &[Recommendation] {
        self.recommendations.get(stakeholder).map_or(&[], Vec::as_slice)
    }

    pub fn conservation(&self) -> &Conservation {
        &self.conservation
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    /// Fold one committed block into derived state. `engine` is the state after it.
    pub fn apply_block(
        &mut self,
        engine: &Engine,
        block: &LedgerBlock,
        spec: &PlatformSpec,
    ) -> Result<(), PlatformError> {
        let tick = block.tick();
        let invariant = |detail: String| PlatformError::Invariant { height: block.height, detail };
        engine.check_invariants().map_err(invariant)?;
        for tx in &block.txs {
            self.kb.ingest(tx);
        }

        let th = &engine.params().thresholds;
        let stakeholders: Vec<ActorId> = engine.stakeholders().cloned().collect();
        for s in &stakeholders {
            let (snap, missing) = engine.build_snapshot(s, tick, None).map_err(|e| invariant(e.to_string()))?;
            let report = IndexReport::build(&snap, &missing, th).map_err(|e| invariant(e.to_string()))?;
            self.kb.set_current_assets(s, snap.current_assets());
            let h = self.history.entry(s.clone()).or_default();
            if h.last().is_some_and(|r| r.period_tick == tick) {
                h.pop();
            }
            h.push(report);
        }

        // An alert condition that persists keeps the alert raised when it first appeared.
        let key = |a: &Alert| (a.index_name.clone(), a.kind, a.counterparty.clone(), a.severity);
        let mut previous: BTreeMap<ActorId, Vec<Alert>> = std::mem::take(&mut self.active);
        let mut carry = |log: &mut Vec<Alert>, s: &ActorId, fresh: Vec<Alert>| -> Vec<Alert> {
            let prev = previous.entry(s.clone()).or_default();
            fresh
                .into_iter()
                .map(|a| match prev.iter().find(|p| key(p) == key(&a)) {
                    Some(p) => p.clone(),
                    None => {
                        log.push(a.clone());
                        a
                    }
                })
                .collect()
        };

        let predictor = OlsPredictor;
        for s in &stakeholders {
            let history: Vec<&IndexReport> = self.history(s).iter().collect();
            let out = monitor_report(&history, &spec.monitor, th, &predictor);
            let alerts = carry(&mut self.alert_log, s, out.alerts);
            let current = alerts
                .iter()
                .filter(|a| a.kind == AlertKind::Current && a.severity == Severity::Alert)
                .map(|a| a.alert_id.clone());
            self.kb.set_current_alerts(s, current);
            self.declining.insert(s.clone(), out.declining);
            self.active.insert(s.clone(), alerts);
        }
        let mut contagion: BTreeMap<ActorId, Vec<Alert>> = BTreeMap::new();
        for t in self.kb.derived().iter().filter(|t| t.predicate == Predicate::ContagionWatch) {
            let a = ActorId::new(t.subject.id.clone());
            let b = ActorId::new(t.object.id.clone());
            contagion.entry(a.clone()).or_default().push(Alert::contagion(&a, &b, tick));
        }
        for s in &stakeholders {
            let watch = carry(&mut self.alert_log, s, contagion.remove(s).unwrap_or_default());
            let active = self.active.entry(s.clone()).or_default();
            active.extend(watch);
            let recs = recommend_services(s, tick, active, self.declining.get(s).map_or(&[], Vec::as_slice));
            self.recommendations.insert(s.clone(), recs);
        }

        let mut acc = self.conservation.checksum.0.to_vec();
        acc.extend_from_slice(&tick.to_be_bytes());
        acc.extend_from_slice(&engine.total_supply().to_be_bytes());
        acc.extend_from_slice(&engine.sum_balances().to_be_bytes());
        self.conservation.checksum = sha256(&acc);
        self.conservation.checks += 1;
        self.height = block.height;
        Ok(())
    }
}

#[derive(Debug)]
pub struct Platform {
    spec: PlatformSpec,
    ledger: Ledger<Engine>,
    keys: Keyring,
    derived: Derived,
    store: Option<Store>,
}

impl Platform {
    /// In-memory platform.
    pub fn new(spec: PlatformSpec) -> Self {
        let (network, keys) = spec.provision();
        let engine = Engine::new(&network, spec.params.clone());
        Self { derived: Derived::new(spec.theta), ledger: Ledger::new(network, engine), keys, spec, store: None }
    }

    /// Fresh platform persisted under `dir`.
    pub fn create(dir: &Path, spec: PlatformSpec) -> Result<Self, PlatformError> {
        let store = Store::create(dir, &spec)?;
        let mut p = Self::new(spec);
        p.store = Some(store);
        Ok(p)
    }

    /// Rebuild from `dir`, starting from the latest valid checkpoint.
    pub fn open(dir: &Path) -> Result<Self, PlatformError> {
        Self::open_with(dir, true)
    }

    /// Rebuild from `dir`; with `use_checkpoints` false every block is re-executed.
    pub fn open_with(dir: &Path, use_checkpoints: bool) -> Result<Self, PlatformError> {
        let (store, contents) = Store::open(dir)?;
        let mut p = Self::replay(contents.spec, contents.blocks, use_checkpoints.then_some(dir))?;
        let mut store = store;
        store.append_alerts(&p.derived.alert_log)?;
        p.store = Some(store);
        Ok(p)
    }

    fn replay(spec: PlatformSpec, blocks: Vec<LedgerBlock>, checkpoints: Option<&Path>) -> Result<Self, PlatformError> {
        let mut p = Self::new(spec);
        let mut start = 0;
        if let Some(ck) = checkpoints.and_then(|dir| store::latest_checkpoint(dir, &blocks, blocks.len() as u64)) {
            let mut chain = vec![LedgerBlock::genesis()];
            chain.extend(blocks[..ck.height as usize].iter().cloned());
            p.ledger = Ledger::restore(p.ledger.network().clone(), chain, ck.engine);
            p.derived = ck.derived;
            start = ck.height as usize;
        }
        for block in &blocks[start..] {
            let height = block.height;
            p.ledger.commit_block(block.clone()).map_err(|e: CommitError| {
                PlatformError::Store(StoreError::CorruptLog { seq: height, reason: e.to_string() })
            })?;
            p.derived.apply_block(p.ledger.state(), block, &p.spec)?;
        }
        Ok(p)
    }

    pub fn spec(&self) -> &PlatformSpec {
        &self.spec
    }

    pub fn ledger(&self) -> &Ledger<Engine> {
        &self.ledger
    }

    pub fn engine(&self) -> &Engine {
        self.ledger.state()
    }

    pub fn derived(&self) -> &Derived {
        &self.derived
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.derived.kb
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.store.as_ref().map(Store::dir)
    }

    /// Tick the next transaction should carry at the earliest.
    pub fn now(&self) -> Tick {
        self.ledger.speculative_state().tick()
    }

    /// Sign `payload` as `submitter` and queue it.
    pub fn submit(&mut self, submitter: &ActorId, payload: Payload, tick: Tick) -> Result<Hash, PlatformError> {
        let key = self.keys.get(submitter).ok_or_else(|| PlatformError::UnknownMember(submitter.clone()))?;
        let node = self
            .ledger
            .network()
            .get(submitter)
            .ok_or_else(|| PlatformError::UnknownMember(submitter.clone()))?
            .clone();
        let tx = LedgerTransaction::sign(submitter.clone(), payload, tick, key);
        Ok(self.ledger.submit_transaction(tx, &node)?)
    }

    /// Commit the pending pool as one block. `Ok(None)` when nothing is pending.
    pub fn commit(&mut self) -> Result<Option<&LedgerBlock>, PlatformError> {
        if self.ledger.pending().is_empty() {
            return Ok(None);
        }
        match self.ledger.propose_and_commit_block(&self.keys, &EndorsementSchedule::all_honest()) {
            Ok(_) => {}
            Err(ConsensusError::NothingPending) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let block = self.ledger.tip().clone();
        if let Some(store) = &mut self.store {
            store.append(&block)?;
        }
        let seen = self.derived.alert_log.len();
        self.derived.apply_block(self.ledger.state(), &block, &self.spec)?;
        if let Some(store) = &mut self.store {
            store.append_alerts(&self.derived.alert_log[seen..])?;
            let k = self.spec.checkpoint_every;
            if k > 0 && block.height.is_multiple_of(k) {
                store.write_checkpoint(&Checkpoint {
                    height: block.height,
                    tip_hash: block.block_hash,
                    engine: self.ledger.state().clone(),
                    derived: self.derived.clone(),
                })?;
            }
        }
        Ok(Some(self.ledger.tip()))
    }

    /// Submit one transaction and commit it in its own block.
    pub fn execute(&mut self, submitter: &ActorId, payload: Payload, tick: Tick) -> Result<(Hash, u64), PlatformError> {
        let id = self.submit(submitter, payload, tick)?;
        self.commit()?;
        Ok((id, self.ledger.height()))
    }

    pub fn risk(&self, stakeholder: &ActorId) -> Option<RiskScore> {
        let e = self.engine();
        score_risk(e, stakeholder, e.tick(), &e.params().risk_weights).ok()
    }

    pub fn run_report(&self) -> RunReport {
        RunReport::build(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealSummary {
    pub deal_id: DealId,
    pub originator: ActorId,
    pub spv_id: ActorId,
    pub pool_size: usize,
    pub pool_face_value: Amount,
    pub abs_units: u64,
    pub units_sold: u64,
    pub state: DealState,
    pub collected: Amount,
    pub risk_score: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub minted: String,
    pub burned: String,
    pub supply: String,
    pub sum_balances: String,
    pub holds: bool,
    pub checks: u64,
    pub checksum: Hash,
}

/// Machine-readable summary of a platform's committed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub commits: u64,
    pub transactions: u64,
    pub last_tick: Tick,
    pub tip_hash: Hash,
    pub alerts: Vec<Alert>,
    pub deals: Vec<DealSummary>,
    pub conservation: ConservationReport,
    /// Latest index report per stakeholder.
    pub final_indices: BTreeMap<ActorId, Value>,
    /// Counterparty risk score per stakeholder, as an exact fraction.
    pub risk: BTreeMap<ActorId, String>,
}

impl RunReport {
    pub fn build(p: &Platform) -> Self {
        let e = p.engine();
        let fraction = |r: &Rational| format!("{}/{}", r.numer(), r.denom());
        let deals = e
            .deals()
            .map(|d| DealSummary {
                deal_id: d.deal_id.clone(),
                originator: d.originator.clone(),
                spv_id: d.spv_id.clone(),
                pool_size: d.pool.len(),
                pool_face_value: d.pool_face_value,
                abs_units: d.abs_units,
                units_sold: d.units_sold(),
                state: d.state,
                collected: d.collected,
                risk_score: fraction(&d.risk_score),
            })
            .collect();
        let stakeholders: Vec<ActorId> = e.stakeholders().cloned().collect();
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            commits: p.ledger.height(),
            transactions: e.applied(),
            last_tick: e.tick(),
            tip_hash: p.ledger.tip().block_hash,
            alerts: p.derived.alert_log.clone(),
            deals,
            conservation: ConservationReport {
                minted: e.total_minted().to_string(),
                burned: e.total_burned().to_string(),
                supply: e.total_supply().to_string(),
                sum_balances: e.sum_balances().to_string(),
                holds: e.total_supply() == e.sum_balances(),
                checks: p.derived.conservation.checks,
                checksum: p.derived.conservation.checksum,
            },
            final_indices: stakeholders
                .iter()
                .filter_map(|s| Some((s.clone(), p.derived.latest_report(s)?.to_json())))
                .collect(),
            risk: stakeholders.iter().filter_map(|s| Some((s.clone(), fraction(&p.risk(s)?.value)))).collect(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
