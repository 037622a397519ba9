use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{apply_operation, DataflowGraph, Element, StateCell};

use super::{OracleError, TaskId};

/// Where a data item sits: queued in front of an operation, or ready to
/// leave the system.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Op(String),
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Data {
        element: Element,
        at: Location,
    },
    State {
        task: TaskId,
        partition: String,
        cell: StateCell,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStep {
    Input(Element),
    /// Moves a finished data item to the outputs. A state item may be
    /// output as well; that is a snapshot and the state stays in the working set.
    Output(Item),
    Transform {
        op: String,
        consumed: BTreeSet<Item>,
        produced: BTreeSet<Item>,
    },
    FailureRecover,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelState {
    pub tau: u64,
    pub inputs_a: BTreeSet<Element>,
    pub outputs_b: Vec<Item>,
    pub working_w: BTreeSet<Item>,
}

fn not_enabled(msg: impl Into<String>) -> OracleError {
    OracleError::StepNotEnabled(msg.into())
}

impl ModelState {
    pub fn new() -> Self {
        Self::default()
    }

    fn state_in_w(&self, task: &TaskId, partition: &str) -> Option<&Item> {
        self.working_w.iter().find(|i| {
            matches!(i, Item::State { task: t, partition: p, .. } if t == task && p == partition)
        })
    }

    /// The transform that processes `data` with the state currently in W.
    pub fn transform_for(&self, graph: &DataflowGraph, data: &Item) -> Result<ModelStep, OracleError> {
        let Item::Data {
            element,
            at: Location::Op(name),
        } = data
        else {
            return Err(not_enabled("only data queued at an operation can be transformed"));
        };
        let op = graph
            .op(name)
            .ok_or_else(|| not_enabled(format!("unknown operation {name}")))?;
        let mut consumed = BTreeSet::from([data.clone()]);
        if op.is_stateful() {
            let task = TaskId::new(name, op.route(element));
            if let Some(s) = self.state_in_w(&task, &op.partition_key(element)) {
                consumed.insert(s.clone());
            }
        }
        let produced = expected_products(graph, name, &consumed)?;
        Ok(ModelStep::Transform {
            op: name.clone(),
            consumed,
            produced,
        })
    }
}

fn expected_products(
    graph: &DataflowGraph,
    op_name: &str,
    consumed: &BTreeSet<Item>,
) -> Result<BTreeSet<Item>, OracleError> {
    let op = graph
        .op(op_name)
        .ok_or_else(|| not_enabled(format!("unknown operation {op_name}")))?;
    let mut data = None;
    let mut state = None;
    for item in consumed {
        match item {
            Item::Data {
                element,
                at: Location::Op(n),
            } if n == op_name && data.is_none() => data = Some(element),
            Item::State {
                task,
                partition,
                cell,
            } if state.is_none() => state = Some((task, partition, cell)),
            _ => return Err(not_enabled("consumed set is not one element plus at most one state")),
        }
    }
    let elem = data.ok_or_else(|| not_enabled(format!("no element queued at {op_name} consumed")))?;
    let task = TaskId::new(op_name, op.route(elem));
    let partition = op.partition_key(elem);
    if let Some((t, p, _)) = state {
        if *t != task || *p != partition {
            return Err(not_enabled(format!("state of {t}/{p} cannot serve {task}/{partition}")));
        }
    }
    let (next, derived) = apply_operation(op, state.map(|(_, _, c)| c), elem)?;
    let mut produced = BTreeSet::new();
    if let Some(cell) = next {
        produced.insert(Item::State {
            task,
            partition,
            cell,
        });
    }
    let successors = graph.successors(op_name);
    for d in derived {
        if successors.is_empty() {
            produced.insert(Item::Data {
                element: d.clone(),
                at: Location::Out,
            });
        }
        for s in &successors {
            produced.insert(Item::Data {
                element: d.clone(),
                at: Location::Op(s.name.clone()),
            });
        }
    }
    Ok(produced)
}

/// Applies one step of the recurrences. Failure leaves the working set
/// exactly as it was, which is what the reference recovery restores.
pub fn model_step(
    state: &ModelState,
    step: &ModelStep,
    graph: &DataflowGraph,
) -> Result<ModelState, OracleError> {
    let mut next = state.clone();
    next.tau += 1;
    match step {
        ModelStep::Input(e) => {
            if state.inputs_a.iter().any(|a| a.seq() == e.seq()) {
                return Err(not_enabled(format!("input {} already in A", e.seq())));
            }
            next.inputs_a.insert(e.clone());
            next.working_w.insert(Item::Data {
                element: e.clone(),
                at: Location::Op(graph.source_name.clone()),
            });
        }
        ModelStep::Output(item) => {
            if !state.working_w.contains(item) {
                return Err(not_enabled("output item is not in W"));
            }
            match item {
                Item::Data { at: Location::Out, .. } => {
                    next.working_w.remove(item);
                }
                Item::State { .. } => {}
                Item::Data { .. } => return Err(not_enabled("item has not left the sink")),
            }
            next.outputs_b.push(item.clone());
        }
        ModelStep::Transform {
            op,
            consumed,
            produced,
        } => {
            if consumed.is_empty() {
                return Err(not_enabled("empty consumed set"));
            }
            for c in consumed {
                let in_w = state.working_w.contains(c);
                let in_b = matches!(c, Item::State { .. }) && state.outputs_b.contains(c);
                if !in_w && !in_b {
                    return Err(not_enabled("consumed item is in neither W nor B"));
                }
                if matches!(c, Item::Data { .. }) && !in_w {
                    return Err(not_enabled("consumed element is not in W"));
                }
            }
            // a stateful transform either takes the slot's state or the slot is still fresh
            let expected = expected_products(graph, op, consumed)?;
            if let Some(Item::State { task, partition, .. }) =
                expected.iter().find(|i| matches!(i, Item::State { .. }))
            {
                let takes_state = consumed.iter().any(|i| matches!(i, Item::State { .. }));
                if !takes_state && state.state_in_w(task, partition).is_some() {
                    return Err(not_enabled(format!("{task}/{partition} has a state in W that must be consumed")));
                }
            }
            if &expected != produced {
                return Err(not_enabled("produced set differs from the operation's result"));
            }
            for c in consumed {
                next.working_w.remove(c);
            }
            next.working_w.extend(produced.iter().cloned());
        }
        ModelStep::FailureRecover => {}
    }
    Ok(next)
}
