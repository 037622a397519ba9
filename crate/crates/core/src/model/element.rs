use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::key::OrderKey;
use super::payload::Payload;

/// A data-flow item. Provenance is the set of producer sequences of the
/// inputs the element transitively depends on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Element {
    pub key: OrderKey,
    pub id: u64,
    pub payload: Payload,
    pub provenance: BTreeSet<u64>,
}

impl Element {
    /// An input element as the producer emits it.
    pub fn input(producer_seq: u64, payload: Payload) -> Self {
        let key = OrderKey::input(producer_seq);
        Element {
            id: key.element_id(),
            key,
            payload,
            provenance: BTreeSet::from([producer_seq]),
        }
    }

    pub fn derived(key: OrderKey, payload: Payload, provenance: BTreeSet<u64>) -> Self {
        Element {
            id: key.element_id(),
            key,
            payload,
            provenance,
        }
    }

    pub fn seq(&self) -> u64 {
        self.key.producer_seq
    }
}

/// Operation state treated as a data item: a payload plus the inputs it was
/// built from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateCell {
    pub payload: Payload,
    pub provenance: BTreeSet<u64>,
}

impl StateCell {
    pub fn new(payload: Payload) -> Self {
        StateCell {
            payload,
            provenance: BTreeSet::new(),
        }
    }
}

/// Builds input elements with sequences 1, 2, ... from plain payloads.
pub fn inputs_from_payloads(payloads: impl IntoIterator<Item = Payload>) -> Vec<Element> {
    payloads
        .into_iter()
        .enumerate()
        .map(|(i, p)| Element::input(i as u64 + 1, p))
        .collect()
}

/// Convenience for the string pipelines: `["a", "c"]` becomes text inputs 1 and 2.
pub fn text_inputs(words: &[&str]) -> Vec<Element> {
    inputs_from_payloads(words.iter().map(|w| Payload::text(*w)))
}
