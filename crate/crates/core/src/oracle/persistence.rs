use std::collections::{BTreeSet, HashMap};

use crate::model::DataflowGraph;

use super::trace::{ExecutionTrace, TraceEvent};
use super::{GuaranteeVerdict, OracleError, TaskId, Witness};

struct VersionInfo {
    parent: Option<u64>,
    seq: u64,
    task: TaskId,
    first_release: Option<(usize, u64)>,
}

/// Checks the persistence condition for exactly-once under nondeterminism:
/// whenever two released outputs at trace positions `p < q` both depend on
/// a result of a non-commutative operation, that result must have been made
/// recoverable at or before `p`.
///
/// The set-closure form of the condition asks that the common dependencies
/// of the two outputs be restorable from what has already left the system;
/// this checks the operational form: each shared state version is covered by
/// a committed snapshot, a production record, or an exact replay guarantee
/// no later than the first release that depends on it.
pub fn check_persistence_trace(
    trace: &ExecutionTrace,
    graph: &DataflowGraph,
) -> Result<GuaranteeVerdict, OracleError> {
    let header = trace
        .header
        .as_ref()
        .ok_or_else(|| OracleError::MalformedTrace("missing header".into()))?;
    if !header.persistence_events {
        return Err(OracleError::MalformedTrace(
            "trace does not record persistence events".into(),
        ));
    }
    let non_commutative: BTreeSet<&str> = graph
        .operations
        .iter()
        .filter(|o| !o.commutative)
        .map(|o| o.name.as_str())
        .collect();
    if non_commutative.is_empty() {
        return Ok(GuaranteeVerdict::pass(Witness::Note(
            "no non-commutative operations".into(),
        )));
    }

    let mut versions: HashMap<u64, VersionInfo> = HashMap::new();
    let mut deps: HashMap<u64, BTreeSet<u64>> = HashMap::new();
    let mut persisted: HashMap<u64, usize> = HashMap::new();
    let mut commits: Vec<(usize, u64)> = Vec::new();
    let mut checked = 0usize;

    for (tau, rec) in trace.records.iter().enumerate() {
        match &rec.event {
            TraceEvent::Transform {
                task,
                input_id,
                outputs,
                state,
                ..
            } => {
                let mut d = deps.get(input_id).cloned().unwrap_or_default();
                if let Some(sv) = state.as_ref().filter(|_| non_commutative.contains(task.op.as_str())) {
                    versions.entry(sv.version).or_insert(VersionInfo {
                        parent: sv.parent,
                        seq: sv.seq,
                        task: task.clone(),
                        first_release: None,
                    });
                    d.insert(sv.version);
                }
                for o in outputs {
                    deps.insert(o.id, d.clone());
                }
            }
            TraceEvent::ProductionRecord { version, .. } | TraceEvent::ReplayRecoverable { version } => {
                persisted.entry(*version).or_insert(tau);
            }
            TraceEvent::SnapshotCommit { last_key, .. } => commits.push((tau, last_key.producer_seq)),
            TraceEvent::Deliver { items, .. } => {
                for item in items {
                    let mut stack: Vec<u64> = deps.get(&item.id).into_iter().flatten().copied().collect();
                    let mut seen = BTreeSet::new();
                    while let Some(v) = stack.pop() {
                        if !seen.insert(v) {
                            continue;
                        }
                        let Some(info) = versions.get_mut(&v) else {
                            continue;
                        };
                        if let Some(p) = info.parent {
                            stack.push(p);
                        }
                        match info.first_release {
                            None => info.first_release = Some((tau, item.id)),
                            Some((first_at, first_id)) if first_at < tau => {
                                checked += 1;
                                let by_record = persisted.get(&v).copied();
                                let by_commit = commits
                                    .iter()
                                    .filter(|(_, last)| *last >= info.seq)
                                    .map(|(t, _)| *t)
                                    .min();
                                let when = match (by_record, by_commit) {
                                    (Some(a), Some(b)) => Some(a.min(b)),
                                    (a, b) => a.or(b),
                                };
                                if when.is_none_or(|w| w > first_at) {
                                    return Ok(GuaranteeVerdict::fail(
                                        tau,
                                        format!(
                                            "state {v:#x} of {} after input {} was not recoverable when \
                                             element {first_id:#x} was released at {first_at}; \
                                             element {:#x} released at {tau} also depends on it",
                                            info.task, info.seq, item.id
                                        ),
                                    ));
                                }
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(GuaranteeVerdict::pass(Witness::Note(format!(
        "{checked} shared dependencies checked"
    ))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_graph, OperationSpec, OrderKey, Payload, Transition};
    use crate::oracle::trace::{DeliveredItem, ElementRef, StateVersion, TraceHeader};

    fn graph(commutative: bool) -> DataflowGraph {
        let mut op = OperationSpec::stateful("concat", Transition::Concat { window: Some(2) }, Payload::List(vec![]));
        if commutative {
            op.commutative = true;
        }
        build_graph(vec![op], vec![]).unwrap()
    }

    fn transform(seq: u64, version: u64, parent: Option<u64>) -> TraceEvent {
        TraceEvent::Transform {
            task: TaskId::new("concat", 0),
            input_id: seq,
            input_key: OrderKey::input(seq),
            provenance: vec![seq],
            outputs: vec![ElementRef {
                id: 100 + seq,
                key: OrderKey::new(seq, vec![0]),
            }],
            state: Some(StateVersion {
                version,
                parent,
                partition: String::new(),
                seq,
            }),
        }
    }

    fn deliver(seq: u64, text: &str) -> TraceEvent {
        TraceEvent::Deliver {
            bundle_id: seq,
            t_last: OrderKey::new(seq, vec![0]),
            items: vec![DeliveredItem {
                id: 100 + seq,
                key: OrderKey::new(seq, vec![0]),
                payload: Payload::text(text),
            }],
        }
    }

    fn two_outputs(persist: Option<TraceEvent>) -> ExecutionTrace {
        let mut t = ExecutionTrace::new(TraceHeader::new("test", 0));
        t.push(1, None, transform(1, 11, None));
        if let Some(p) = persist {
            t.push(2, None, p);
        }
        t.push(3, None, deliver(1, "d"));
        t.push(4, None, transform(2, 12, Some(11)));
        t.push(5, None, deliver(2, "db"));
        t
    }

    #[test]
    fn unpersisted_shared_state_is_named() {
        let v = check_persistence_trace(&two_outputs(None), &graph(false)).unwrap();
        assert!(!v.holds);
        assert_eq!(v.counterexample_index, Some(3));
        assert!(v.detail.unwrap().contains("0xb"));
    }

    #[test]
    fn persistence_before_first_release_suffices() {
        for p in [
            TraceEvent::ReplayRecoverable { version: 11 },
            TraceEvent::ProductionRecord {
                task: TaskId::new("concat", 0),
                input_id: 1,
                version: 11,
            },
            TraceEvent::SnapshotCommit {
                snapshot_id: 1,
                last_key: OrderKey::input(1),
                states: vec![],
            },
        ] {
            assert!(check_persistence_trace(&two_outputs(Some(p)), &graph(false)).unwrap().holds);
        }
    }

    #[test]
    fn vacuous_and_malformed() {
        assert!(check_persistence_trace(&two_outputs(None), &graph(true)).unwrap().holds);
        let mut bare = two_outputs(None);
        bare.header = None;
        assert!(matches!(
            check_persistence_trace(&bare, &graph(false)),
            Err(OracleError::MalformedTrace(_))
        ));
        let mut silent = two_outputs(None);
        silent.header.as_mut().unwrap().persistence_events = false;
        assert!(check_persistence_trace(&silent, &graph(false)).is_err());
    }
}
