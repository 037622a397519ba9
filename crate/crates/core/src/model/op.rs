use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::element::{Element, StateCell};
use super::key::{derive_order_key, stable_hash_str};
use super::payload::{Payload, WordPosting};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Map,
    FlatMap,
    Stateful,
}

/// The built-in transition functions. Pipelines are compiled into the crate,
/// so a transition is named rather than loaded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum Transition {
    Identity,
    Uppercase,
    /// Keeps the last `window` texts (all of them when `None`) and emits
    /// their concatenation after each input.
    Concat {
        #[serde(default)]
        window: Option<usize>,
    },
    /// Document into one word posting per distinct word, in order of first occurrence.
    Tokenize,
    /// Per-word reducer emitting the updated posting list with a running ordinal.
    IndexReduce,
}

impl Transition {
    /// Payload shapes a state of this transition may take after the first step.
    pub fn state_shapes(&self) -> &'static [&'static str] {
        match self {
            Transition::Concat { .. } => &["list"],
            Transition::IndexReduce => &["list", "index_change"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKey {
    Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub name: String,
    pub kind: OpKind,
    #[serde(default = "default_true")]
    pub commutative: bool,
    #[serde(default)]
    pub order_sensitive: bool,
    #[serde(default)]
    pub initial_state: Option<Payload>,
    pub transition: Transition,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub partition_by: Option<PartitionKey>,
}

fn default_true() -> bool {
    true
}

fn default_parallelism() -> usize {
    1
}

impl OperationSpec {
    pub fn map(name: &str, transition: Transition) -> Self {
        OperationSpec {
            name: name.to_string(),
            kind: OpKind::Map,
            commutative: true,
            order_sensitive: false,
            initial_state: None,
            transition,
            parallelism: 1,
            partition_by: None,
        }
    }

    pub fn flat_map(name: &str, transition: Transition) -> Self {
        OperationSpec {
            kind: OpKind::FlatMap,
            ..Self::map(name, transition)
        }
    }

    /// A stateful, order-sensitive, non-commutative operation.
    pub fn stateful(name: &str, transition: Transition, initial_state: Payload) -> Self {
        OperationSpec {
            name: name.to_string(),
            kind: OpKind::Stateful,
            commutative: false,
            order_sensitive: true,
            initial_state: Some(initial_state),
            transition,
            parallelism: 1,
            partition_by: None,
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn partitioned_by(mut self, key: PartitionKey) -> Self {
        self.partition_by = Some(key);
        self
    }

    pub fn is_stateful(&self) -> bool {
        self.kind == OpKind::Stateful
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.parallelism == 0 {
            return Err(ModelError::InvalidOperation {
                op: self.name.clone(),
                reason: "parallelism must be positive".into(),
            });
        }
        if !self.commutative && !self.order_sensitive {
            return Err(ModelError::InvalidOperation {
                op: self.name.clone(),
                reason: "non-commutative operations must be order sensitive".into(),
            });
        }
        if self.is_stateful() != self.initial_state.is_some() {
            return Err(ModelError::InvalidOperation {
                op: self.name.clone(),
                reason: "stateful operations need an initial state, others must not have one"
                    .into(),
            });
        }
        Ok(())
    }

    /// The key that selects both the task instance and the per-key state slot.
    pub fn partition_key(&self, elem: &Element) -> String {
        match (self.partition_by, &elem.payload) {
            (Some(PartitionKey::Word), Payload::WordPosting(p)) => p.word.clone(),
            (Some(PartitionKey::Word), Payload::IndexChange { word, .. }) => word.clone(),
            _ => String::new(),
        }
    }

    /// Task instance an element is routed to.
    pub fn route(&self, elem: &Element) -> usize {
        if self.parallelism == 1 {
            return 0;
        }
        match self.partition_by {
            Some(_) => (stable_hash_str(&self.partition_key(elem)) % self.parallelism as u64) as usize,
            None => (elem.seq() % self.parallelism as u64) as usize,
        }
    }

    pub fn initial_cell(&self) -> Option<StateCell> {
        self.initial_state.clone().map(StateCell::new)
    }
}

/// One step of an operation: consume `elem` together with `state`, return the
/// next state and the derived elements.
///
/// Derived element `i` gets the key `derive_order_key(elem.key, i)` and the
/// provenance of the input united with the provenance of the state.
pub fn apply_operation(
    op: &OperationSpec,
    state: Option<&StateCell>,
    elem: &Element,
) -> Result<(Option<StateCell>, Vec<Element>), ModelError> {
    let panic = |reason: String| ModelError::TransitionPanic {
        op: op.name.clone(),
        element_id: elem.id,
        reason,
    };
    let state = match (op.is_stateful(), state) {
        (true, Some(s)) => {
            let initial = op.initial_state.as_ref().map(Payload::shape);
            let found = s.payload.shape();
            if initial != Some(found) && !op.transition.state_shapes().contains(&found) {
                return Err(ModelError::StateShapeMismatch {
                    op: op.name.clone(),
                    expected: initial.unwrap_or("none").to_string(),
                    found: found.to_string(),
                });
            }
            Some(s.clone())
        }
        (true, None) => op.initial_cell(),
        (false, Some(s)) => {
            return Err(ModelError::StateShapeMismatch {
                op: op.name.clone(),
                expected: "none".into(),
                found: s.payload.shape().to_string(),
            })
        }
        (false, None) => None,
    };

    let (next_payload, outputs) = run_transition(&op.transition, state.as_ref().map(|s| &s.payload), &elem.payload)
        .map_err(panic)?;

    let mut provenance = elem.provenance.clone();
    if let Some(s) = &state {
        provenance.extend(s.provenance.iter().copied());
    }
    let next_state = match (state, next_payload) {
        (Some(_), Some(payload)) => Some(StateCell {
            payload,
            provenance: provenance.clone(),
        }),
        (None, None) => None,
        _ => return Err(panic("transition changed state arity".into())),
    };
    let derived = outputs
        .into_iter()
        .enumerate()
        .map(|(i, payload)| {
            Element::derived(derive_order_key(&elem.key, i as u32), payload, provenance.clone())
        })
        .collect();
    Ok((next_state, derived))
}

type TransitionOutput = (Option<Payload>, Vec<Payload>);

fn run_transition(
    t: &Transition,
    state: Option<&Payload>,
    input: &Payload,
) -> Result<TransitionOutput, String> {
    match t {
        Transition::Identity => Ok((None, vec![input.clone()])),
        Transition::Uppercase => match input {
            Payload::Text(s) => Ok((None, vec![Payload::Text(s.to_uppercase())])),
            other => Err(format!("uppercase expects text, got {}", other.shape())),
        },
        Transition::Concat { window } => {
            let Some(Payload::List(items)) = state else {
                return Err("concat state must be a list".into());
            };
            if !matches!(input, Payload::Text(_)) {
                return Err(format!("concat expects text, got {}", input.shape()));
            }
            let mut items = items.clone();
            items.push(input.clone());
            if let Some(w) = window {
                let w = (*w).max(1);
                if items.len() > w {
                    items.drain(..items.len() - w);
                }
            }
            let joined: String = items.iter().filter_map(Payload::as_text).collect();
            Ok((Some(Payload::List(items)), vec![Payload::Text(joined)]))
        }
        Transition::Tokenize => {
            let Payload::Document { doc_id, text } = input else {
                return Err(format!("tokenize expects a document, got {}", input.shape()));
            };
            Ok((None, tokenize(*doc_id, text).into_iter().map(Payload::WordPosting).collect()))
        }
        Transition::IndexReduce => {
            let Payload::WordPosting(posting) = input else {
                return Err(format!("index reducer expects a word posting, got {}", input.shape()));
            };
            let (ordinal, mut postings) = match state {
                Some(Payload::IndexChange {
                    ordinal, postings, ..
                }) => (*ordinal, postings.clone()),
                // the initial state is an empty list
                Some(Payload::List(l)) if l.is_empty() => (0, Vec::new()),
                _ => return Err("index reducer state must be an index change".into()),
            };
            postings.push(posting.clone());
            let change = Payload::IndexChange {
                word: posting.word.clone(),
                ordinal: ordinal + 1,
                postings,
            };
            Ok((Some(change.clone()), vec![change]))
        }
    }
}

/// Splits on single spaces, drops empty tokens, numbers the remaining words
/// from zero and groups positions by word in order of first occurrence.
pub fn tokenize(doc_id: i64, text: &str) -> Vec<WordPosting> {
    let mut order: Vec<String> = Vec::new();
    let mut positions: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for (pos, word) in text.split(' ').filter(|w| !w.is_empty()).enumerate() {
        let entry = positions.entry(word.to_string()).or_default();
        if entry.is_empty() {
            order.push(word.to_string());
        }
        entry.push(pos as u32);
    }
    order
        .into_iter()
        .map(|word| {
            let positions = positions.remove(&word).unwrap_or_default();
            WordPosting {
                word,
                doc_id,
                positions,
            }
        })
        .collect()
}

/// Provenance union helper used by tests and the oracle.
pub fn union_provenance<'a>(sets: impl IntoIterator<Item = &'a BTreeSet<u64>>) -> BTreeSet<u64> {
    sets.into_iter().flat_map(|s| s.iter().copied()).collect()
}
