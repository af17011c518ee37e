//! Multi-round audit scheduling shared by the live-web and archive audits.
//!
//! A URI is re-tried in later rounds only while it has not succeeded. Rounds
//! are separated by `spacing` measured from the last outcome of the previous
//! round, so an interrupted audit resumed from its journal keeps the schedule.

use std::collections::HashMap;
use std::time::Duration;

use chrono::{DateTime, Utc};

use crate::clock::Clock;
use crate::politeness::{run_bounded, HostGate};

pub trait RoundResult {
    fn round(&self) -> u32;
    fn at(&self) -> DateTime<Utc>;
    fn is_success(&self) -> bool;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundPlan {
    pub rounds: u32,
    pub spacing: Duration,
    pub concurrency: usize,
}

impl Default for RoundPlan {
    fn default() -> Self {
        RoundPlan {
            rounds: 3,
            spacing: Duration::from_secs(48 * 3600),
            concurrency: 8,
        }
    }
}

/// Runs `probe(uri, round, at)` for every URI that still needs it.
///
/// `history` holds outcomes already recorded (for resuming) and is returned
/// extended with the new ones. Each new outcome is handed to `sink` as soon
/// as its round completes.
pub fn run_rounds<O, E, P, S>(
    uris: &[String],
    plan: &RoundPlan,
    clock: &dyn Clock,
    gate: &HostGate,
    mut history: HashMap<String, Vec<O>>,
    probe: P,
    mut sink: S,
) -> Result<HashMap<String, Vec<O>>, E>
where
    O: RoundResult + Send,
    E: Send,
    P: Fn(&str, u32, DateTime<Utc>) -> Result<O, E> + Sync + Send,
    S: FnMut(&str, &O) -> Result<(), E>,
{
    let mut unique: Vec<String> = Vec::with_capacity(uris.len());
    {
        let mut seen = std::collections::HashSet::new();
        for u in uris {
            if seen.insert(u.as_str()) {
                unique.push(u.clone());
            }
        }
    }

    for round in 1..=plan.rounds.max(1) {
        let pending: Vec<String> = unique
            .iter()
            .filter(|u| {
                let past = history.get(*u).map(Vec::as_slice).unwrap_or_default();
                !past.iter().any(|o| o.is_success()) && !past.iter().any(|o| o.round() == round)
            })
            .cloned()
            .collect();
        if pending.is_empty() {
            continue;
        }
        if round > 1 {
            let previous_end = history
                .values()
                .flatten()
                .filter(|o| o.round() == round - 1)
                .map(|o| o.at())
                .max();
            if let Some(end) = previous_end {
                clock.sleep_until(end + chrono::Duration::from_std(plan.spacing).unwrap_or_default());
            }
        }
        let at = clock.now();
        log::info!("round {round}: probing {} URIs", pending.len());
        let outcomes = run_bounded(&pending, plan.concurrency, |uri| {
            gate.run(uri, || probe(uri, round, at))
        });
        for (uri, outcome) in pending.into_iter().zip(outcomes) {
            let outcome = outcome?;
            sink(&uri, &outcome)?;
            history.entry(uri).or_default().push(outcome);
        }
    }
    for outcomes in history.values_mut() {
        outcomes.sort_by_key(|o| o.round());
    }
    Ok(history)
}
