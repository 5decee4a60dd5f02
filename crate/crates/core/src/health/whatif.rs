//! What-if analysis on a private fork of contract state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contracts::Engine;
use crate::ids::{ActorId, Tick};
use crate::indices::{BalanceSheetSnapshot, IndexName, IndexReport, SerRational};
use crate::ledger::Payload;

use super::HealthError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhatIf {
    pub before_snapshot: BalanceSheetSnapshot,
    pub after_snapshot: BalanceSheetSnapshot,
    pub before: IndexReport,
    pub after: IndexReport,
    /// `after − before` for indices defined on both sides.
    pub delta: BTreeMap<IndexName, Option<SerRational>>,
}

fn report(
    engine: &Engine,
    stakeholder: &ActorId,
    tick: Tick,
) -> Result<(BalanceSheetSnapshot, IndexReport), HealthError> {
    let (snap, missing) = engine
        .build_snapshot(stakeholder, tick, None)
        .map_err(|_| HealthError::UnknownStakeholder(stakeholder.clone()))?;
    let report = IndexReport::build(&snap, &missing, &engine.params().thresholds)
        .map_err(|e| HealthError::InvalidHypothetical { index: 0, reason: e.to_string() })?;
    Ok((snap, report))
}

/// Apply `events` (submitter, payload) to a clone of `engine` at its current tick and
/// compare `stakeholder`'s index reports. The original engine is never touched.
pub fn simulate_whatif(
    engine: &Engine,
    stakeholder: &ActorId,
    events: &[(ActorId, Payload)],
) -> Result<WhatIf, HealthError> {
    let tick = engine.tick();
    let (before_snapshot, before) = report(engine, stakeholder, tick)?;
    let mut fork = engine.clone();
    for (index, (submitter, payload)) in events.iter().enumerate() {
        fork.apply(submitter, tick, payload)
            .map_err(|e| HealthError::InvalidHypothetical { index, reason: e.code().to_string() })?;
    }
    let (after_snapshot, after) = report(&fork, stakeholder, tick)?;
    let delta = IndexName::ALL
        .into_iter()
        .map(|n| {
            let d = match (before.value(n), after.value(n)) {
                (Some(b), Some(a)) => Some(SerRational(a - b)),
                _ => None,
            };
            (n, d)
        })
        .collect();
    Ok(WhatIf { before_snapshot, after_snapshot, before, after, delta })
}
