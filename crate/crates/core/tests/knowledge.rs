use std::collections::BTreeSet;

use num::rational::Ratio;

use scftwin_core::contracts::ContractCall;
use scftwin_core::health::{AlertKind, Severity};
use scftwin_core::ids::{ActorId, Tick};
use scftwin_core::knowledge::{KnowledgeBase, Predicate, Triple};
use scftwin_core::ledger::Payload;
use scftwin_core::platform::Platform;
use scftwin_core::simulator::{drive, generate, PaymentBehavior, ScenarioConfig};

fn q(n: i128, d: i128) -> Ratio<i128> {
    Ratio::new(n, d)
}

fn scenario(seed: u64) -> Platform {
    let mut cfg = ScenarioConfig::chain(seed, 6, 120, q(1, 2));
    cfg.default_payment_behavior = PaymentBehavior { p_on_time: q(1, 2), p_late: q(1, 4), p_default: q(1, 4) };
    let script = generate(&cfg).unwrap();
    let mut p = Platform::new(cfg.platform_spec());
    drive(&script, &cfg.policy, &mut p).unwrap();
    p
}

#[test]
fn triple_count_equals_per_payload_expectation() {
    for seed in [3, 4, 5] {
        let p = scenario(seed);
        let (mut trades, mut pooled) = (0usize, 0usize);
        let mut snapshots: BTreeSet<(ActorId, Tick)> = BTreeSet::new();
        let mut supplies: BTreeSet<(ActorId, ActorId)> = BTreeSet::new();
        for tx in p.ledger().blocks().iter().flat_map(|b| &b.txs) {
            match &tx.payload {
                Payload::TradeCreditCreated { .. } => trades += 1,
                Payload::SnapshotPublished { record } => {
                    let s = &record.snapshot.stakeholder_id;
                    snapshots.insert((s.clone(), record.snapshot.period_tick));
                    supplies.extend(record.buyers.iter().map(|b| (s.clone(), b.clone())));
                }
                Payload::ContractInvocation { call: ContractCall::InitiateSecuritization { pool, .. } } => {
                    pooled += pool.len()
                }
                _ => {}
            }
        }
        let alerts: BTreeSet<&str> = p
            .derived()
            .alert_log()
            .iter()
            .filter(|a| a.kind == AlertKind::Current && a.severity == Severity::Alert && a.index().is_some())
            .map(|a| a.alert_id.as_str())
            .collect();
        let expected = 2 * trades + snapshots.len() + supplies.len() + pooled + alerts.len();
        let kb = p.kb();
        assert!(trades > 0 && pooled > 0 && !alerts.is_empty(), "seed {seed} is too quiet");
        assert_eq!(kb.asserted().len(), expected, "seed {seed}");

        let count = |pred: Predicate| kb.asserted().iter().filter(|t| t.predicate == pred).count();
        assert_eq!(count(Predicate::HoldsReceivable), trades);
        assert_eq!(count(Predicate::OwedBy), trades);
        assert_eq!(count(Predicate::HasSnapshot), snapshots.len());
        assert_eq!(count(Predicate::Supplies), supplies.len());
        assert_eq!(count(Predicate::MemberOfDeal), pooled);
        assert_eq!(count(Predicate::HasAlert), alerts.len());
    }
}

#[test]
fn reingesting_the_log_adds_nothing() {
    let p = scenario(6);
    let mut kb = KnowledgeBase::new(p.kb().theta());
    let txs: Vec<_> = p.ledger().blocks().iter().flat_map(|b| b.txs.clone()).collect();
    let first: usize = txs.iter().map(|tx| kb.ingest(tx).len()).sum();
    let again: usize = txs.iter().map(|tx| kb.ingest(tx).len()).sum();
    assert_eq!(first, kb.asserted().len());
    assert_eq!(again, 0);
    // The log alone yields everything except alert membership, which comes from monitoring.
    let without_alerts: BTreeSet<&Triple> =
        p.kb().asserted().iter().filter(|t| t.predicate != Predicate::HasAlert).collect();
    assert_eq!(kb.asserted().iter().collect::<BTreeSet<_>>(), without_alerts);
}

#[test]
fn incremental_exposure_matches_scan_after_payment() {
    let p = scenario(7);
    let kb = p.kb();
    let ids: Vec<ActorId> = p.engine().stakeholders().cloned().collect();
    let mut paid = 0;
    for x in &ids {
        for y in &ids {
            assert_eq!(kb.exposure(x, y), kb.exposure_scan(x, y), "{x} -> {y}");
        }
    }
    for r in p.engine().receivables() {
        let fact = kb.receivable(&r.receivable_id).unwrap();
        assert_eq!(fact.status, r.status);
        paid += usize::from(r.paid_tick.is_some());
    }
    assert!(paid > 0);
    assert_eq!(
        kb.infer_contagion(),
        kb.derived().iter().filter(|t| t.predicate == Predicate::ContagionWatch).cloned().collect()
    );
}
