use serde::{Deserialize, Serialize};

use crate::model::Payload;
use crate::oracle::trace::{DeliveredItem, ExecutionTrace, PersistedState, TraceEvent};
use crate::oracle::Observed;
use crate::protocols::{Bundle, GuaranteeMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredBundle {
    pub time_us: u64,
    pub bundle: Bundle,
}

/// Time from the first injection of an input to the delivery of its last
/// derived output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub seq: u64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEventKind {
    Failure { node: usize },
    /// An element or marker was overdue; the run treats it as lost.
    Stall { overdue: usize },
    Recovery {
        generation: u64,
        from_seq: u64,
        replayed: u64,
    },
    SnapshotCommit { snapshot_id: u64, last_seq: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time_us: u64,
    #[serde(flatten)]
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mode: GuaranteeMode,
    pub seed: u64,
    pub inputs: u64,
    pub end_time_us: u64,
    pub delivered: Vec<DeliveredBundle>,
    pub latencies: Vec<LatencySample>,
    pub events: Vec<SimEvent>,
    #[serde(skip)]
    pub trace: ExecutionTrace,
}

impl SimResult {
    pub fn delivered_items(&self) -> Vec<DeliveredItem> {
        self.delivered
            .iter()
            .flat_map(|d| d.bundle.items.iter().cloned())
            .collect()
    }

    pub fn delivered_payloads(&self) -> Vec<Payload> {
        self.delivered_items().into_iter().map(|i| i.payload).collect()
    }

    /// Delivered outputs interleaved with committed snapshot states. A
    /// snapshot is placed where the delivered stream passes its cut: before
    /// the first later output from an input beyond the cut, or at the end.
    /// Without a trace only outputs are known.
    pub fn observed(&self) -> Vec<Observed> {
        if self.trace.records.is_empty() {
            return Observed::outputs(self.delivered_payloads());
        }
        let mut out = Vec::new();
        let mut pending: Vec<(u64, &[PersistedState])> = Vec::new();
        let flush = |pending: &mut Vec<(u64, &[PersistedState])>, out: &mut Vec<Observed>, upto: Option<u64>| {
            pending.retain(|(last, states)| {
                if upto.is_some_and(|seq| seq <= *last) {
                    return true;
                }
                out.extend(states.iter().map(|s| Observed::Snapshot {
                    task: s.task.clone(),
                    partition: s.partition.clone(),
                    state: s.state.clone(),
                }));
                false
            });
        };
        for r in &self.trace.records {
            match &r.event {
                TraceEvent::SnapshotCommit { states, last_key, .. } => {
                    pending.push((last_key.producer_seq, states));
                }
                TraceEvent::Deliver { items, .. } => {
                    for i in items {
                        flush(&mut pending, &mut out, Some(i.key.producer_seq));
                        out.push(Observed::Output(i.payload.clone()));
                    }
                }
                _ => {}
            }
        }
        flush(&mut pending, &mut out, None);
        out
    }

    pub fn recoveries(&self) -> Vec<(u64, u64, u64)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                SimEventKind::Recovery {
                    generation,
                    from_seq,
                    replayed,
                } => Some((generation, from_seq, replayed)),
                _ => None,
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, SimEventKind::Failure { .. }))
            .count()
    }

    pub fn latency_ms(&self) -> Vec<f64> {
        self.latencies.iter().map(|l| l.ms).collect()
    }
}
