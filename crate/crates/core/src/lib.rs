//! A desk-scale laboratory for delivery guarantees in distributed stream
//! processing.
//!
//! The crate bundles five pieces that are meant to be used together:
//!
//! - [`model`]: elements, the total order on them, operations and dataflow graphs.
//! - [`oracle`]: an executable reference model of a streaming system with
//!   idealized recovery, used to decide whether an observed output sequence is
//!   exactly-once, at-least-once or at-most-once, and to audit execution traces.
//! - [`sim`]: a seeded discrete-event simulator with lossy, reordering channels,
//!   node failures and XOR-based completion tracking.
//! - [`protocols`]: the guarantee modes run by the simulator (deterministic
//!   exactly-once, transactional epochs, strong productions, naive replay and
//!   no guarantee at all).
//! - [`storage`], [`pipelines`], [`bench`]: persistence, workloads and the
//!   experiment driver behind the `streamlab` binary.

pub mod bench;
pub mod model;
pub mod oracle;
pub mod pipelines;
pub mod protocols;
pub mod sim;
pub mod storage;
