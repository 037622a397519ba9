//! Guarantee protocols: snapshot rounds, output release, production records
//! and checkpoint-marker alignment.

mod alignment;
mod barrier;
mod coordinator;
mod production;
mod types;

pub use alignment::{Alignment, MarkerInfo, SentCounter};
pub use barrier::BarrierState;
pub use coordinator::{Coordinator, IncompleteRound, Round};
pub use production::{ProductionRecord, ProductionStore};
pub use types::{Bundle, BundleError, GuaranteeMode, Snapshot, UnknownMode};
