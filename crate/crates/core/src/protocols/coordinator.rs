use std::collections::{BTreeMap, BTreeSet};

use crate::model::{OrderKey, Payload};

use super::Snapshot;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("snapshot round {snapshot_id} is missing {missing:?}")]
pub struct IncompleteRound {
    pub snapshot_id: u64,
    pub missing: Vec<String>,
}

/// One open snapshot round: which participants still owe an acceptance and
/// the states collected so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub snapshot_id: u64,
    /// Last producer sequence the cut includes.
    pub target: u64,
    pub awaiting: BTreeSet<String>,
    pub states: BTreeMap<String, BTreeMap<String, Payload>>,
}

/// Snapshot coordinator. Rounds are numbered from 1, commit in id order and
/// strictly increase the committed target.
#[derive(Debug, Clone)]
pub struct Coordinator {
    participants: BTreeSet<String>,
    max_open: usize,
    next_id: u64,
    committed: Option<u64>,
    rounds: BTreeMap<u64, Round>,
}

impl Coordinator {
    /// `participants` must all accept a round before it can commit;
    /// `max_open` bounds the rounds running at once.
    pub fn new(participants: impl IntoIterator<Item = String>, max_open: usize) -> Self {
        Coordinator {
            participants: participants.into_iter().collect(),
            max_open: max_open.max(1),
            next_id: 1,
            committed: None,
            rounds: BTreeMap::new(),
        }
    }

    /// Target of the last committed snapshot, zero before the first commit.
    pub fn committed_target(&self) -> u64 {
        self.committed.unwrap_or(0)
    }

    /// Id the next round will get.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn has_committed(&self) -> bool {
        self.committed.is_some()
    }

    pub fn open_rounds(&self) -> impl Iterator<Item = &Round> {
        self.rounds.values()
    }

    fn highest_target(&self) -> Option<u64> {
        self.rounds.values().map(|r| r.target).max().or(self.committed)
    }

    /// Opens a round cutting after `target` unless the cut would not move
    /// past the newest one. A round on an empty input is allowed once.
    pub fn initiate(&mut self, target: u64) -> Option<&Round> {
        if self.rounds.len() >= self.max_open {
            return None;
        }
        if let Some(prev) = self.highest_target() {
            if target <= prev {
                return None;
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let round = Round {
            snapshot_id: id,
            target,
            awaiting: self.participants.clone(),
            states: BTreeMap::new(),
        };
        self.rounds.insert(id, round);
        self.rounds.get(&id)
    }

    /// Records one participant's acceptance. Stale rounds are ignored.
    /// Returns true once the round has every acceptance.
    pub fn accept(
        &mut self,
        snapshot_id: u64,
        participant: &str,
        states: BTreeMap<String, Payload>,
    ) -> bool {
        let Some(r) = self.rounds.get_mut(&snapshot_id) else {
            return false;
        };
        if r.awaiting.remove(participant) && !states.is_empty() {
            r.states.insert(participant.to_string(), states);
        }
        r.awaiting.is_empty()
    }

    /// Commits the oldest open round. Fails, leaving the round open, while
    /// it still misses acceptances.
    pub fn commit(&mut self) -> Result<Snapshot, IncompleteRound> {
        let Some((&id, r)) = self.rounds.iter().next() else {
            return Err(IncompleteRound {
                snapshot_id: 0,
                missing: vec!["open round".into()],
            });
        };
        if !r.awaiting.is_empty() {
            return Err(IncompleteRound {
                snapshot_id: id,
                missing: r.awaiting.iter().cloned().collect(),
            });
        }
        let r = self.rounds.remove(&id).expect("present");
        self.committed = Some(r.target);
        Ok(Snapshot {
            snapshot_id: r.snapshot_id,
            states: r.states,
            last_key: if r.target == 0 { OrderKey::MIN } else { OrderKey::input(r.target) },
            committed: true,
        })
    }

    /// True when the oldest open round can commit.
    pub fn ready(&self) -> bool {
        self.rounds.values().next().is_some_and(|r| r.awaiting.is_empty())
    }

    /// Drops every open round (a failure interrupted them) and returns their ids.
    pub fn abort_all(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.rounds).into_keys().collect()
    }
}
