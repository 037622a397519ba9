//! Elements, their total order, operations and dataflow graphs.

mod element;
mod graph;
mod key;
mod op;
mod payload;

pub use element::{inputs_from_payloads, text_inputs, Element, StateCell};
pub use graph::{build_graph, DataflowGraph, GraphDocument};
pub use key::{compare_order_keys, derive_order_key, stable_hash_str, Fnv, OrderKey};
pub use op::{apply_operation, tokenize, union_provenance, OpKind, OperationSpec, PartitionKey, Transition};
pub use payload::{canonical_json, Payload, PayloadError, WordPosting};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("graph has no operations")]
    EmptyGraph,
    #[error("dataflow graph contains a cycle")]
    CycleDetected,
    #[error("edge {from} -> {to} references an undeclared operation")]
    DanglingEdge { from: String, to: String },
    #[error("graph has several sources: {0:?}")]
    MultipleSources(Vec<String>),
    #[error("graph has several sinks: {0:?}")]
    MultipleSinks(Vec<String>),
    #[error("operation name `{0}` declared twice")]
    DuplicateName(String),
    #[error("invalid operation `{op}`: {reason}")]
    InvalidOperation { op: String, reason: String },
    #[error("operation `{op}` failed on element {element_id:#x}: {reason}")]
    TransitionPanic {
        op: String,
        element_id: u64,
        reason: String,
    },
    #[error("state of `{op}` has shape {found}, expected {expected}")]
    StateShapeMismatch {
        op: String,
        expected: String,
        found: String,
    },
    #[error("cannot parse graph document: {0}")]
    Parse(String),
}
