//! Discrete-event simulation of a distributed deployment of a data-flow graph.
//!
//! Tasks are placed round-robin on nodes. The producer, the snapshot
//! coordinator, the sink barrier, the consumer and storage are services that
//! never fail. Data channels are lossy with uniform delay; control messages
//! are reliable. All randomness comes from per-channel substreams of the run
//! seed, so a configuration fully determines the run.

mod acker;
mod config;
mod engine;
mod protocol;
mod result;
mod rng;
mod task;

pub use acker::AckerRegister;
pub use config::{DelayRange, EpochClock, FaultPlan, FaultProfile, NodeFailure, SimConfig, UnknownProfile};
pub use result::{DeliveredBundle, LatencySample, SimEvent, SimEventKind, SimResult};
pub use rng::{channel_deliver, substream, Delivery};

use crate::model::{DataflowGraph, Element, ModelError};
use crate::storage::StorageError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("run did not quiesce by {time_ms} ms: {census}")]
    Diverged { time_ms: u64, census: String },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runs `graph` on `inputs` (producer sequences 1..=n) until the run
/// quiesces: every input injected, every output delivered and acknowledged,
/// nothing in flight and no recovery pending.
pub fn run_simulation(
    graph: &DataflowGraph,
    inputs: &[Element],
    config: &SimConfig,
) -> Result<SimResult, SimError> {
    for (i, e) in inputs.iter().enumerate() {
        if e.seq() != i as u64 + 1 {
            return Err(SimError::InvalidConfig(format!(
                "input {} carries sequence {}",
                i + 1,
                e.seq()
            )));
        }
    }
    engine::Sim::new(graph, inputs, config)?.run()
}
