use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::OrderKey;
use crate::oracle::trace::{DeliveredItem, PersistedState};
use crate::oracle::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GuaranteeMode {
    NoGuarantee,
    AtLeastOnceNaive,
    ExactlyOnceDeterministic,
    ExactlyOnceTransactional,
    ExactlyOnceStrongProductions,
}

impl GuaranteeMode {
    pub const ALL: [GuaranteeMode; 5] = [
        GuaranteeMode::NoGuarantee,
        GuaranteeMode::AtLeastOnceNaive,
        GuaranteeMode::ExactlyOnceDeterministic,
        GuaranteeMode::ExactlyOnceTransactional,
        GuaranteeMode::ExactlyOnceStrongProductions,
    ];

    pub fn claims_exactly_once(self) -> bool {
        matches!(
            self,
            GuaranteeMode::ExactlyOnceDeterministic
                | GuaranteeMode::ExactlyOnceTransactional
                | GuaranteeMode::ExactlyOnceStrongProductions
        )
    }

    pub fn recovers(self) -> bool {
        self != GuaranteeMode::NoGuarantee
    }

    /// Short lowercase name used on the command line and in reports.
    pub fn short_name(self) -> &'static str {
        match self {
            GuaranteeMode::NoGuarantee => "none",
            GuaranteeMode::AtLeastOnceNaive => "naive",
            GuaranteeMode::ExactlyOnceDeterministic => "deterministic",
            GuaranteeMode::ExactlyOnceTransactional => "transactional",
            GuaranteeMode::ExactlyOnceStrongProductions => "strong-productions",
        }
    }
}

impl fmt::Display for GuaranteeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown guarantee mode `{0}`")]
pub struct UnknownMode(pub String);

impl FromStr for GuaranteeMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        GuaranteeMode::ALL
            .into_iter()
            .find(|m| {
                m.short_name() == norm || format!("{m:?}").to_ascii_lowercase() == norm.replace('-', "")
            })
            .ok_or_else(|| UnknownMode(s.to_string()))
    }
}

/// States of every stateful task at one consistent cut, plus the key of the
/// last input the cut includes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub snapshot_id: u64,
    /// Task (`op#instance`) to partition key to state.
    pub states: BTreeMap<String, BTreeMap<String, crate::model::Payload>>,
    pub last_key: OrderKey,
    pub committed: bool,
}

impl Snapshot {
    pub fn empty(snapshot_id: u64) -> Self {
        Snapshot {
            snapshot_id,
            states: BTreeMap::new(),
            last_key: OrderKey::MIN,
            committed: false,
        }
    }

    pub fn persisted_states(&self) -> Vec<PersistedState> {
        let mut out = Vec::new();
        for (task, slots) in &self.states {
            let (op, inst) = task.rsplit_once('#').unwrap_or((task.as_str(), "0"));
            for (partition, state) in slots {
                out.push(PersistedState {
                    task: TaskId::new(op, inst.parse().unwrap_or(0)),
                    partition: partition.clone(),
                    state: state.clone(),
                });
            }
        }
        out
    }
}

/// A batch of outputs released together, tagged with the key of its last item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub items: Vec<DeliveredItem>,
    pub t_last: OrderKey,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("bundle has no items")]
    Empty,
    #[error("bundle items are not strictly increasing by key")]
    Unordered,
}

impl Bundle {
    pub fn new(items: Vec<DeliveredItem>) -> Result<Self, BundleError> {
        let t_last = items.last().ok_or(BundleError::Empty)?.key.clone();
        if items.windows(2).any(|w| w[0].key >= w[1].key) {
            return Err(BundleError::Unordered);
        }
        Ok(Bundle { items, t_last })
    }

    /// A bundle whose items may repeat or go backwards, as an unfiltered
    /// replay produces them.
    pub fn unchecked(items: Vec<DeliveredItem>) -> Result<Self, BundleError> {
        let t_last = items.last().ok_or(BundleError::Empty)?.key.clone();
        Ok(Bundle { items, t_last })
    }
}
