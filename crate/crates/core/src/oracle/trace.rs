//! JSON-lines execution traces. The first line is a header naming the
//! schema; every following line is one timestamped event.

use serde::{Deserialize, Serialize};

use crate::model::{OrderKey, Payload};

use super::{OracleError, TaskId};

pub const TRACE_SCHEMA: &str = "streamlab-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub mode: String,
    pub seed: u64,
    /// Whether the producer of the trace records which states became
    /// recoverable and when. Trace-level guarantee checks need this.
    pub persistence_events: bool,
}

impl TraceHeader {
    pub fn new(mode: &str, seed: u64) -> Self {
        TraceHeader {
            schema: TRACE_SCHEMA.to_string(),
            version: TRACE_VERSION,
            mode: mode.to_string(),
            seed,
            persistence_events: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRef {
    pub id: u64,
    pub key: OrderKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredItem {
    pub id: u64,
    pub key: OrderKey,
    pub payload: Payload,
}

/// Identity of a state produced by a transform of a stateful task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVersion {
    pub version: u64,
    pub parent: Option<u64>,
    pub partition: String,
    /// Producer sequence of the input whose processing produced this state.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistedState {
    pub task: TaskId,
    pub partition: String,
    pub state: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Input {
        seq: u64,
        element_id: u64,
        generation: u64,
        replay: bool,
    },
    Transform {
        task: TaskId,
        input_id: u64,
        input_key: OrderKey,
        provenance: Vec<u64>,
        outputs: Vec<ElementRef>,
        state: Option<StateVersion>,
    },
    /// The sink handed an element to the barrier.
    Output { element_id: u64, key: OrderKey },
    /// A bundle reached the consumer and was acknowledged.
    Deliver {
        bundle_id: u64,
        t_last: OrderKey,
        items: Vec<DeliveredItem>,
    },
    /// Persist-before-emit record of one processed input.
    ProductionRecord {
        task: TaskId,
        input_id: u64,
        version: u64,
    },
    /// The state can be recomputed exactly by replaying retained inputs in order.
    ReplayRecoverable { version: u64 },
    SnapshotCommit {
        snapshot_id: u64,
        last_key: OrderKey,
        states: Vec<PersistedState>,
    },
    EpochCommit { epoch: u64, last_seq: u64 },
    SnapshotAbort { snapshot_id: u64, reason: String },
    Failure { node: usize },
    Recovery {
        generation: u64,
        from_seq: u64,
        replayed: u64,
    },
    Drop { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub header: Option<TraceHeader>,
    pub records: Vec<TraceRecord>,
}

impl ExecutionTrace {
    pub fn new(header: TraceHeader) -> Self {
        ExecutionTrace {
            header: Some(header),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, time_us: u64, node: Option<usize>, event: TraceEvent) {
        self.records.push(TraceRecord {
            time_us,
            node,
            event,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&serde_json::to_string(h).expect("header serializes"));
            out.push('\n');
        }
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, OracleError> {
        let mut trace = ExecutionTrace::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| OracleError::MalformedTrace(format!("line {}: {e}", n + 1)))?;
            if n == 0 && value.get("schema").is_some() {
                let h: TraceHeader = serde_json::from_value(value)
                    .map_err(|e| OracleError::MalformedTrace(format!("header: {e}")))?;
                if h.schema != TRACE_SCHEMA || h.version != TRACE_VERSION {
                    return Err(OracleError::MalformedTrace(format!(
                        "unsupported schema {} v{}",
                        h.schema, h.version
                    )));
                }
                trace.header = Some(h);
                continue;
            }
            let r: TraceRecord = serde_json::from_value(value)
                .map_err(|e| OracleError::MalformedTrace(format!("line {}: {e}", n + 1)))?;
            trace.records.push(r);
        }
        Ok(trace)
    }

    /// Time of each delivered item, in delivery order.
    pub fn deliveries(&self) -> impl Iterator<Item = (u64, &DeliveredItem)> {
        self.records.iter().flat_map(|r| match &r.event {
            TraceEvent::Deliver { items, .. } => items.iter().map(|i| (r.time_us, i)).collect(),
            _ => Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = ExecutionTrace::new(TraceHeader::new("deterministic", 7));
        t.push(
            1000,
            Some(2),
            TraceEvent::Input {
                seq: 1,
                element_id: 9,
                generation: 0,
                replay: false,
            },
        );
        t.push(
            1500,
            None,
            TraceEvent::Deliver {
                bundle_id: 1,
                t_last: OrderKey::new(1, vec![0]),
                items: vec![DeliveredItem {
                    id: 3,
                    key: OrderKey::new(1, vec![0]),
                    payload: Payload::text("a"),
                }],
            },
        );
        let text = t.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"schema\":\"streamlab-trace\""));
        assert!(text.lines().nth(1).unwrap().contains("\"event\":\"input\""));
        assert_eq!(ExecutionTrace::from_jsonl(&text).unwrap(), t);
        assert_eq!(t.deliveries().count(), 1);
    }

    #[test]
    fn bad_lines_are_malformed() {
        assert!(matches!(
            ExecutionTrace::from_jsonl("{\"schema\":\"other\",\"version\":1,\"mode\":\"x\",\"seed\":0,\"persistence_events\":true}"),
            Err(OracleError::MalformedTrace(_))
        ));
        assert!(matches!(
            ExecutionTrace::from_jsonl("not json"),
            Err(OracleError::MalformedTrace(_))
        ));
    }
}
