use std::collections::BTreeMap;

use crate::model::{Element, OrderKey, StateCell};
use crate::oracle::TaskId;
use crate::protocols::{Alignment, SentCounter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(super) enum Endpoint {
    Producer,
    Task(usize),
    Barrier,
}

/// A state slot and the version that produced it (none for the initial state).
#[derive(Debug, Clone, PartialEq)]
pub(super) struct Slot {
    pub cell: StateCell,
    pub version: Option<u64>,
}

/// Volatile runtime of one task instance.
pub(super) struct TaskRt {
    pub label: String,
    pub id: TaskId,
    pub op: usize,
    pub node: usize,
    /// Ordered stage the task's input waits for.
    pub stage: usize,
    pub ordered: bool,
    pub stateful: bool,
    pub outputs: Vec<Endpoint>,
    pub slots: BTreeMap<String, Slot>,
    /// Slots as of the last committed cut.
    pub base: BTreeMap<String, Slot>,
    /// Per slot, the state after each input processed since the last cut.
    pub history: BTreeMap<String, Vec<(u64, Slot)>>,
    /// Arrived elements not yet processed, with the channel they came on.
    pub buffer: BTreeMap<OrderKey, (Element, Endpoint)>,
    /// A production record write is outstanding.
    pub busy: bool,
    pub down: bool,
    /// Open snapshot requests as (snapshot id, target).
    pub requests: Vec<(u64, u64)>,
    pub align: Alignment,
    pub sent: SentCounter,
}

impl TaskRt {
    pub fn new(label: String, id: TaskId, op: usize, node: usize, inputs: Vec<String>) -> Self {
        TaskRt {
            label,
            id,
            op,
            node,
            stage: 0,
            ordered: false,
            stateful: false,
            outputs: Vec::new(),
            slots: BTreeMap::new(),
            base: BTreeMap::new(),
            history: BTreeMap::new(),
            buffer: BTreeMap::new(),
            busy: false,
            down: false,
            requests: Vec::new(),
            align: Alignment::new(inputs),
            sent: SentCounter::default(),
        }
    }

    pub fn record(&mut self, seq: u64, partition: &str, slot: Slot) {
        self.history
            .entry(partition.to_string())
            .or_default()
            .push((seq, slot.clone()));
        self.slots.insert(partition.to_string(), slot);
    }

    /// Slots as they were right after the last input with sequence at most `target`.
    pub fn capture(&self, target: u64) -> BTreeMap<String, Slot> {
        let mut out = self.base.clone();
        for (p, h) in &self.history {
            if let Some((_, s)) = h.iter().rev().find(|(seq, _)| *seq <= target) {
                out.insert(p.clone(), s.clone());
            }
        }
        out
    }

    /// The cut at `target` committed: fold older history into the base.
    pub fn fold(&mut self, target: u64) {
        self.base = self.capture(target);
        for h in self.history.values_mut() {
            h.retain(|(seq, _)| *seq > target);
        }
        self.history.retain(|_, h| !h.is_empty());
    }

    pub fn install(&mut self, slots: BTreeMap<String, Slot>) {
        self.history.clear();
        self.base = slots.clone();
        self.slots = slots;
    }

    pub fn clear_volatile(&mut self) {
        self.slots.clear();
        self.base.clear();
        self.history.clear();
        self.buffer.clear();
        self.busy = false;
        self.requests.clear();
        self.sent.clear();
    }

    /// Nothing with sequence at most `seq` is waiting or being written.
    pub fn settled_through(&self, seq: u64) -> bool {
        !self.busy
            && self
                .buffer
                .keys()
                .next()
                .is_none_or(|k| k.producer_seq > seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Payload;

    fn slot(s: &str, v: u64) -> Slot {
        Slot {
            cell: StateCell::new(Payload::text(s)),
            version: Some(v),
        }
    }

    #[test]
    fn capture_picks_the_state_at_the_cut() {
        let mut t = TaskRt::new("c#0".into(), TaskId::new("c", 0), 0, 0, vec![]);
        t.record(1, "", slot("a", 1));
        t.record(2, "", slot("ab", 2));
        t.record(4, "", slot("abd", 4));
        assert_eq!(t.capture(3)[""], slot("ab", 2));
        assert!(t.capture(0).is_empty());
        t.fold(2);
        assert_eq!(t.base[""], slot("ab", 2));
        assert_eq!(t.capture(3)[""], slot("ab", 2));
        assert_eq!(t.capture(9)[""], slot("abd", 4));
    }
}
