//! Executable reference semantics: the literal step relation, exhaustive
//! enumeration of failure-free runs, and verdicts for delivery guarantees.
//!
//! Inputs are given as channels. Elements of one channel arrive in order;
//! distinct channels race. Put every input in its own channel to model a
//! fully asynchronous producer, or all of them in one channel for a single
//! ordered source.

mod search;
mod step;
mod persistence;
pub mod trace;
mod verdict;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Element, ModelError, Payload};

pub use search::{enumerate_reference_runs, SearchLimits, DEFAULT_NODE_BUDGET};
pub use step::{model_step, Item, Location, ModelState, ModelStep};
pub use persistence::check_persistence_trace;
pub use verdict::{
    check_at_least_once, check_at_most_once, check_determinism, check_exactly_once,
    DEFAULT_MAX_DUPLICATION,
};

/// Input channels for the oracle: FIFO inside a channel, racing across channels.
pub type Channels = Vec<Vec<Element>>;

/// One channel per element.
pub fn racing(inputs: &[Element]) -> Channels {
    inputs.iter().map(|e| vec![e.clone()]).collect()
}

/// All elements on one ordered channel.
pub fn single_channel(inputs: &[Element]) -> Channels {
    vec![inputs.to_vec()]
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId {
    pub op: String,
    pub instance: usize,
}

impl TaskId {
    pub fn new(op: &str, instance: usize) -> Self {
        TaskId {
            op: op.to_string(),
            instance,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.op, self.instance)
    }
}

/// Something a consumer of the system can see leave it. Persisted states
/// count as outputs too, which lets a recovery that reads them back be
/// explained inside the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Output(Payload),
    Snapshot {
        task: TaskId,
        partition: String,
        state: Payload,
    },
}

impl Observed {
    pub fn outputs(payloads: impl IntoIterator<Item = Payload>) -> Vec<Observed> {
        payloads.into_iter().map(Observed::Output).collect()
    }

    pub fn texts(words: &[&str]) -> Vec<Observed> {
        Self::outputs(words.iter().map(|w| Payload::text(*w)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// A complete failure-free output sequence extending the observation.
    Run(Vec<Payload>),
    /// Producer sequences of the inputs consumed, duplicates included.
    InputMultiset(Vec<u64>),
    /// Producer sequences of the inputs kept; everything else was dropped.
    InputSubset(Vec<u64>),
    /// Free-form description, used by trace-level checks.
    Note(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuaranteeVerdict {
    pub holds: bool,
    pub witness: Option<Witness>,
    pub counterexample_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl GuaranteeVerdict {
    pub fn pass(witness: Witness) -> Self {
        GuaranteeVerdict {
            holds: true,
            witness: Some(witness),
            counterexample_index: None,
            detail: None,
        }
    }

    pub fn fail(index: usize, detail: impl Into<String>) -> Self {
        GuaranteeVerdict {
            holds: false,
            witness: None,
            counterexample_index: Some(index),
            detail: Some(detail.into()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("search budget of {0} nodes exceeded")]
    SearchBudgetExceeded(u64),
    #[error("step not enabled: {0}")]
    StepNotEnabled(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("too many inputs for exhaustive search: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
