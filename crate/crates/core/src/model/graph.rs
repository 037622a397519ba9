use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::op::OperationSpec;
use super::ModelError;

/// Validated DAG of operations with exactly one source and one sink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataflowGraph {
    pub operations: Vec<OperationSpec>,
    pub edges: Vec<(String, String)>,
    pub source_name: String,
    pub sink_name: String,
    /// Operation names in topological order; ties broken by name.
    pub topo_order: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// The JSON form accepted by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub operations: Vec<OperationSpec>,
    pub edges: Vec<(String, String)>,
}

pub fn build_graph(
    ops: Vec<OperationSpec>,
    edges: Vec<(String, String)>,
) -> Result<DataflowGraph, ModelError> {
    if ops.is_empty() {
        return Err(ModelError::EmptyGraph);
    }
    let mut index = BTreeMap::new();
    for (i, op) in ops.iter().enumerate() {
        op.validate()?;
        if index.insert(op.name.clone(), i).is_some() {
            return Err(ModelError::DuplicateName(op.name.clone()));
        }
    }
    let mut incoming: BTreeMap<&str, usize> = ops.iter().map(|o| (o.name.as_str(), 0)).collect();
    let mut outgoing: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (from, to) in &edges {
        for end in [from, to] {
            if !index.contains_key(end) {
                return Err(ModelError::DanglingEdge {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        if !seen.insert((from.as_str(), to.as_str())) {
            continue;
        }
        *incoming.get_mut(to.as_str()).unwrap() += 1;
        outgoing.entry(from.as_str()).or_default().push(to.as_str());
    }

    // Kahn's algorithm; the ready set is ordered by name so the result is stable.
    let mut remaining = incoming.clone();
    let mut ready: BTreeSet<&str> = remaining
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut topo = Vec::with_capacity(ops.len());
    while let Some(n) = ready.pop_first() {
        topo.push(n.to_string());
        for succ in outgoing.get(n).into_iter().flatten() {
            let d = remaining.get_mut(succ).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(succ);
            }
        }
    }
    if topo.len() != ops.len() {
        return Err(ModelError::CycleDetected);
    }

    let sources: Vec<&str> = incoming.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let sinks: Vec<&str> = ops
        .iter()
        .map(|o| o.name.as_str())
        .filter(|n| outgoing.get(n).is_none_or(|v| v.is_empty()))
        .collect();
    if sources.len() > 1 {
        return Err(ModelError::MultipleSources(sources.iter().map(|s| s.to_string()).collect()));
    }
    if sinks.len() > 1 {
        return Err(ModelError::MultipleSinks(sinks.iter().map(|s| s.to_string()).collect()));
    }
    let source_name = sources[0].to_string();
    let sink_name = sinks[0].to_string();
    let mut dedup_edges = Vec::new();
    for (f, t) in edges {
        if !dedup_edges.contains(&(f.clone(), t.clone())) {
            dedup_edges.push((f, t));
        }
    }
    Ok(DataflowGraph {
        operations: ops,
        edges: dedup_edges,
        source_name,
        sink_name,
        topo_order: topo,
        index,
    })
}

impl DataflowGraph {
    pub fn from_document(doc: GraphDocument) -> Result<Self, ModelError> {
        build_graph(doc.operations, doc.edges)
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let doc: GraphDocument =
            serde_json::from_str(json).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            operations: self.operations.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn op(&self, name: &str) -> Option<&OperationSpec> {
        self.index.get(name).map(|&i| &self.operations[i])
    }

    pub fn op_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn source(&self) -> &OperationSpec {
        self.op(&self.source_name).expect("validated")
    }

    pub fn sink(&self) -> &OperationSpec {
        self.op(&self.sink_name).expect("validated")
    }

    pub fn successors(&self, name: &str) -> Vec<&OperationSpec> {
        self.edges
            .iter()
            .filter(|(f, _)| f == name)
            .filter_map(|(_, t)| self.op(t))
            .collect()
    }

    pub fn predecessors(&self, name: &str) -> Vec<&OperationSpec> {
        self.edges
            .iter()
            .filter(|(_, t)| t == name)
            .filter_map(|(f, _)| self.op(f))
            .collect()
    }

    /// Operations in topological order.
    pub fn ops_in_order(&self) -> impl Iterator<Item = &OperationSpec> {
        self.topo_order.iter().map(|n| self.op(n).expect("validated"))
    }

    pub fn has_non_commutative(&self) -> bool {
        self.operations.iter().any(|o| !o.commutative)
    }

    /// Number of order-sensitive operations at or before `name` in
    /// topological order, minus one when `name` itself is order sensitive.
    /// Elements heading into `name` are waiting for the ordered operation
    /// with this stage index (or for the sink barrier when it equals
    /// [`DataflowGraph::ordered_stage_count`]).
    pub fn stage_of(&self, name: &str) -> usize {
        let mut stage = 0;
        for op in self.ops_in_order() {
            if op.name == name {
                return stage;
            }
            if op.order_sensitive {
                stage += 1;
            }
        }
        stage
    }

    pub fn ordered_stage_count(&self) -> usize {
        self.operations.iter().filter(|o| o.order_sensitive).count()
    }
}
