use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Element, OrderKey, Payload};

/// Durable record of one stateful step: the derived elements and the state
/// after the step, written before any of the elements leave the task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductionRecord {
    pub task: String,
    pub partition: String,
    pub input_key: OrderKey,
    pub outputs: Vec<Element>,
    pub state: Payload,
    pub version: u64,
}

impl ProductionRecord {
    pub fn input_id(&self) -> u64 {
        self.input_key.element_id()
    }
}

/// Production records of every task. The first record for an input wins;
/// a racing second computation is never stored.
#[derive(Debug, Clone, Default)]
pub struct ProductionStore {
    records: BTreeMap<(String, u64), ProductionRecord>,
    latest: BTreeMap<(String, String), (OrderKey, Payload, u64)>,
}

impl ProductionStore {
    /// Stores the record unless one exists for the same task and input.
    /// Returns whether it was stored.
    pub fn persist(&mut self, rec: ProductionRecord) -> bool {
        let id = (rec.task.clone(), rec.input_id());
        if self.records.contains_key(&id) {
            return false;
        }
        let slot = (rec.task.clone(), rec.partition.clone());
        let newer = self.latest.get(&slot).is_none_or(|(k, _, _)| *k < rec.input_key);
        if newer {
            self.latest
                .insert(slot, (rec.input_key.clone(), rec.state.clone(), rec.version));
        }
        self.records.insert(id, rec);
        true
    }

    pub fn lookup(&self, task: &str, input_id: u64) -> Option<&ProductionRecord> {
        self.records.get(&(task.to_string(), input_id))
    }

    /// Per partition, the state and version of the latest record of `task`.
    pub fn latest_states(&self, task: &str) -> BTreeMap<String, (Payload, u64)> {
        self.latest
            .iter()
            .filter(|((t, _), _)| t == task)
            .map(|((_, p), (_, s, v))| (p.clone(), (s.clone(), *v)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
