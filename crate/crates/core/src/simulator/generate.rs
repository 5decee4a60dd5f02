//! Scenario generation. The generator is ChaCha8 seeded from the config seed, so a
//! config fully determines its script. Draws are integer-valued; probability tests
//! compare a uniform integer below the common denominator against exact numerators.

use std::collections::BTreeMap;

use num::integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contracts::ContractCall;
use crate::ids::{ActorId, ReceivableId, Tick};
use crate::indices::{BalanceSheetSnapshot, SiloRecord};
use crate::ledger::{Payload, Role, TokenOp};
use crate::rational::Rational;

use super::config::{PaymentBehavior, ScenarioConfig, ValueRange};
use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub tick: Tick,
    pub submitter: ActorId,
    pub payload: Payload,
}

/// Ordered event script. Events are sorted by tick; within a tick, by generation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub seed: u64,
    pub ticks: Tick,
    pub members: Vec<(ActorId, Role)>,
    pub events: Vec<ScriptEvent>,
}

impl Script {
    pub fn at(&self, tick: Tick) -> impl Iterator<Item = &ScriptEvent> {
        let start = self.events.partition_point(|e| e.tick < tick);
        self.events[start..].iter().take_while(move |e| e.tick == tick)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("script serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    OnTime,
    Late,
    Default,
}

/// Exact Bernoulli draw: true with probability `p`.
fn chance(rng: &mut ChaCha8Rng, p: &Rational) -> bool {
    let d = *p.denom() as u128;
    (rng.gen_range(0..d) as i128) < *p.numer()
}

fn outcome(rng: &mut ChaCha8Rng, b: &PaymentBehavior) -> Outcome {
    let d = b.p_on_time.denom().lcm(b.p_late.denom()).lcm(b.p_default.denom());
    let scale = |p: &Rational| p.numer() * (d / p.denom());
    let u = rng.gen_range(0..d as u128) as i128;
    if u < scale(&b.p_on_time) {
        Outcome::OnTime
    } else if u < scale(&b.p_on_time) + scale(&b.p_late) {
        Outcome::Late
    } else {
        Outcome::Default
    }
}

fn draw(rng: &mut ChaCha8Rng, r: ValueRange) -> u64 {
    rng.gen_range(r.min..=r.max)
}

/// Multiply by a factor drawn from [92%, 108%], floored.
fn walk(rng: &mut ChaCha8Rng, v: u64) -> u64 {
    let pct: u64 = rng.gen_range(92..=108);
    (v as u128 * pct as u128 / 100) as u64
}

fn initial_silo(rng: &mut ChaCha8Rng, s: &ActorId, base: u64) -> BalanceSheetSnapshot {
    let base = base.max(4);
    let inventory = rng.gen_range(base / 4..=base);
    let invested = rng.gen_range(base..=3 * base);
    BalanceSheetSnapshot {
        stakeholder_id: s.clone(),
        period_tick: 0,
        cash: 0,
        receivables_value: 0,
        inventory_value: inventory,
        other_current_assets: rng.gen_range(0..=base / 4),
        fixed_assets: rng.gen_range(base / 2..=2 * base),
        current_liabilities: rng.gen_range(base / 4..=base),
        long_term_liabilities: rng.gen_range(0..=base),
        production_value: rng.gen_range(base / 2..=2 * base),
        cost_of_goods_sold: rng.gen_range(base / 4..=base),
        average_inventory: inventory,
        invested_capital: invested,
        capital_returned: rng.gen_range(0..=invested / 5),
    }
}

fn step_silo(rng: &mut ChaCha8Rng, s: &mut BalanceSheetSnapshot, tick: Tick) {
    s.period_tick = tick;
    s.inventory_value = walk(rng, s.inventory_value);
    s.other_current_assets = walk(rng, s.other_current_assets);
    s.fixed_assets = walk(rng, s.fixed_assets);
    s.current_liabilities = walk(rng, s.current_liabilities);
    s.long_term_liabilities = walk(rng, s.long_term_liabilities);
    s.production_value = walk(rng, s.production_value);
    s.cost_of_goods_sold = walk(rng, s.cost_of_goods_sold);
    s.average_inventory = (s.average_inventory + s.inventory_value) / 2;
    s.invested_capital = walk(rng, s.invested_capital);
    s.capital_returned = walk(rng, s.capital_returned);
}

/// Generate the event script for `cfg`. Receivable outcomes are drawn when the sale
/// happens; payments and defaults falling after the last tick are not emitted.
pub fn generate(cfg: &ScenarioConfig) -> Result<Script, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stakeholders = cfg.stakeholders();
    let grace = cfg.params.grace;
    let mut silos: BTreeMap<ActorId, BalanceSheetSnapshot> = stakeholders
        .iter()
        .filter(|s| cfg.shares_silo(s))
        .map(|s| (s.clone(), initial_silo(&mut rng, s, cfg.initial_cash)))
        .collect();
    let mut buyers: BTreeMap<&ActorId, Vec<ActorId>> = BTreeMap::new();
    for e in &cfg.trade_graph {
        let v = buyers.entry(&e.supplier).or_default();
        if !v.contains(&e.buyer) {
            v.push(e.buyer.clone());
        }
    }
    for v in buyers.values_mut() {
        v.sort();
    }

    let mut scheduled: BTreeMap<Tick, Vec<ScriptEvent>> = BTreeMap::new();
    let mut events = Vec::new();
    let mut next_id = 1u64;
    for t in 1..=cfg.ticks {
        if t == 1 && cfg.initial_cash > 0 {
            for s in &stakeholders {
                events.push(ScriptEvent {
                    tick: t,
                    submitter: s.clone(),
                    payload: Payload::TokenTransfer {
                        token: TokenOp::Mint { to: s.clone(), amount: cfg.initial_cash },
                    },
                });
            }
        }
        if let Some(due) = scheduled.remove(&t) {
            events.extend(due);
        }
        for e in &cfg.trade_graph {
            if !chance(&mut rng, &e.intensity) {
                continue;
            }
            let face = draw(&mut rng, cfg.face_value);
            let due = t + draw(&mut rng, cfg.term);
            let id = ReceivableId::new(format!("R{next_id:06}"));
            next_id += 1;
            events.push(ScriptEvent {
                tick: t,
                submitter: e.supplier.clone(),
                payload: Payload::TradeCreditCreated {
                    receivable_id: id.clone(),
                    creditor: e.supplier.clone(),
                    debtor: e.buyer.clone(),
                    face_value: face,
                    due_tick: due,
                },
            });
            let (when, ev) = match outcome(&mut rng, &cfg.behavior(&e.buyer)) {
                Outcome::OnTime => (
                    due,
                    ScriptEvent {
                        tick: due,
                        submitter: e.buyer.clone(),
                        payload: Payload::PaymentMade { receivable_id: id, payer: e.buyer.clone() },
                    },
                ),
                Outcome::Late => {
                    let when = due + rng.gen_range(1..=grace.max(1));
                    (
                        when,
                        ScriptEvent {
                            tick: when,
                            submitter: e.buyer.clone(),
                            payload: Payload::PaymentMade { receivable_id: id, payer: e.buyer.clone() },
                        },
                    )
                }
                Outcome::Default => {
                    let when = due + grace + 1;
                    (
                        when,
                        ScriptEvent {
                            tick: when,
                            submitter: e.supplier.clone(),
                            payload: Payload::ContractInvocation {
                                call: ContractCall::DeclareDefault { receivable_id: id },
                            },
                        },
                    )
                }
            };
            if when <= cfg.ticks {
                scheduled.entry(when).or_default().push(ev);
            }
        }
        if t % cfg.snapshot_every == 0 {
            for (s, silo) in silos.iter_mut() {
                step_silo(&mut rng, silo, t);
                events.push(ScriptEvent {
                    tick: t,
                    submitter: s.clone(),
                    payload: Payload::SnapshotPublished {
                        record: SiloRecord {
                            snapshot: silo.clone(),
                            buyers: buyers.get(s).cloned().unwrap_or_default(),
                        },
                    },
                });
            }
        }
    }
    Ok(Script { seed: cfg.seed, ticks: cfg.ticks, members: cfg.members(), events })
}
