use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::protocols::GuaranteeMode;
use crate::storage::StorageBackend;

use super::rng::substream;
use super::SimError;

/// Uniform channel delay bounds in sim-ms, written `[min, max]` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct DelayRange {
    pub min_ms: f64,
    pub max_ms: f64,
}

impl DelayRange {
    pub fn new(min_ms: f64, max_ms: f64) -> Self {
        DelayRange { min_ms, max_ms }
    }

    pub fn min_us(&self) -> u64 {
        (self.min_ms * 1000.0).round() as u64
    }

    pub fn max_us(&self) -> u64 {
        (self.max_ms * 1000.0).round() as u64
    }
}

impl From<[f64; 2]> for DelayRange {
    fn from(v: [f64; 2]) -> Self {
        DelayRange::new(v[0], v[1])
    }
}

impl From<DelayRange> for [f64; 2] {
    fn from(d: DelayRange) -> Self {
        [d.min_ms, d.max_ms]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub time_ms: f64,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub node_failures: Vec<NodeFailure>,
    #[serde(default)]
    pub packet_loss_probability: f64,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    pub fn failures_at(times_ms: &[f64], node: usize) -> Self {
        FaultPlan {
            node_failures: times_ms
                .iter()
                .map(|&time_ms| NodeFailure { time_ms, node })
                .collect(),
            packet_loss_probability: 0.0,
        }
    }
}

/// Recipe for random faults: a failure count, a window the failures fall in
/// and a loss rate. The same seed always yields the same plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    pub failures: (usize, usize),
    pub window_ms: (f64, f64),
    #[serde(default)]
    pub packet_loss_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown fault profile {0:?} (expected none, loss, single or standard)")]
pub struct UnknownProfile(pub String);

impl FaultProfile {
    /// Named profiles; `span_ms` is how long the producer keeps injecting.
    ///
    /// * `none`: no faults
    /// * `loss`: 1% packet loss only
    /// * `single`: one failure
    /// * `standard`: one to three failures and 1% packet loss
    pub fn named(name: &str, span_ms: f64) -> Result<Self, UnknownProfile> {
        let window_ms = (0.0, span_ms.max(1.0));
        let (failures, packet_loss_probability) = match name {
            "none" => ((0, 0), 0.0),
            "loss" => ((0, 0), 0.01),
            "single" => ((1, 1), 0.0),
            "standard" => ((1, 3), 0.01),
            other => return Err(UnknownProfile(other.to_string())),
        };
        Ok(FaultProfile {
            failures,
            window_ms,
            packet_loss_probability,
        })
    }

    pub fn plan(&self, seed: u64, nodes: usize) -> FaultPlan {
        let mut rng = substream(seed, "faults");
        let (lo, hi) = (self.failures.0, self.failures.1.max(self.failures.0));
        let n = rng.gen_range(lo..=hi);
        let (from, to) = self.window_ms;
        let mut node_failures: Vec<NodeFailure> = (0..n)
            .map(|_| NodeFailure {
                time_ms: if to > from { rng.gen_range(from..to).round() } else { from },
                node: rng.gen_range(0..nodes.max(1)),
            })
            .collect();
        node_failures.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
        FaultPlan {
            node_failures,
            packet_loss_probability: self.packet_loss_probability,
        }
    }
}

fn default_nodes() -> usize {
    10
}
fn default_delay() -> DelayRange {
    DelayRange::new(1.0, 10.0)
}
fn default_rate() -> f64 {
    50.0
}
fn default_interval() -> u64 {
    1000
}
fn default_mode() -> GuaranteeMode {
    GuaranteeMode::ExactlyOnceDeterministic
}
fn default_max_time() -> u64 {
    600_000
}
fn default_detection() -> f64 {
    50.0
}
fn default_consumer_ack() -> f64 {
    1.0
}
fn default_ack_timeout() -> f64 {
    100.0
}
fn default_storage_latency() -> f64 {
    2.0
}
fn default_control_delay() -> f64 {
    1.0
}
fn default_barrier_retry() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_delay")]
    pub channel_delay: DelayRange,
    /// Elements per sim-second.
    #[serde(default = "default_rate")]
    pub input_rate: f64,
    #[serde(default = "default_interval")]
    pub checkpoint_interval: u64,
    #[serde(default)]
    pub fault_plan: FaultPlan,
    #[serde(default = "default_mode")]
    pub mode: GuaranteeMode,
    #[serde(default = "default_max_time")]
    pub max_sim_time: u64,
    /// Time from a node failure to the start of recovery.
    #[serde(default = "default_detection")]
    pub detection_delay: f64,
    #[serde(default = "default_consumer_ack")]
    pub consumer_ack_latency: f64,
    /// An element in flight longer than this stalls the run.
    #[serde(default = "default_ack_timeout")]
    pub ack_timeout: f64,
    #[serde(default = "default_storage_latency")]
    pub storage_latency: f64,
    /// Delay of reliable control messages between agents.
    #[serde(default = "default_control_delay")]
    pub control_delay: f64,
    #[serde(default = "default_barrier_retry")]
    pub barrier_retry: f64,
    #[serde(default)]
    pub storage: StorageBackend,
    /// Record the execution trace. Latency sweeps turn this off.
    #[serde(default = "default_true")]
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

pub(crate) fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

impl SimConfig {
    pub fn with_mode(mut self, mode: GuaranteeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_interval(mut self, ms: u64) -> Self {
        self.checkpoint_interval = ms;
        self
    }

    pub fn with_faults(mut self, plan: FaultPlan) -> Self {
        self.fault_plan = plan;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.nodes == 0 {
            return bad("nodes must be positive".into());
        }
        let d = self.channel_delay;
        if !(d.min_ms >= 0.0 && d.min_ms <= d.max_ms) {
            return bad(format!("channel delay [{}, {}] is not a range", d.min_ms, d.max_ms));
        }
        if !(self.input_rate > 0.0 && self.input_rate.is_finite()) {
            return bad("input rate must be positive".into());
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint interval must be positive".into());
        }
        let p = self.fault_plan.packet_loss_probability;
        if !(0.0..1.0).contains(&p) {
            return bad(format!("packet loss probability {p} outside [0, 1)"));
        }
        for f in &self.fault_plan.node_failures {
            if f.time_ms < 0.0 || f.time_ms > self.max_sim_time as f64 {
                return bad(format!("failure at {} ms is outside the run", f.time_ms));
            }
            if f.node >= self.nodes {
                return bad(format!("failure names node {} of {}", f.node, self.nodes));
            }
        }
        for (name, v) in [
            ("detection_delay", self.detection_delay),
            ("consumer_ack_latency", self.consumer_ack_latency),
            ("storage_latency", self.storage_latency),
            ("control_delay", self.control_delay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if !(self.ack_timeout > 0.0 && self.barrier_retry > 0.0) {
            return bad("timeouts must be positive".into());
        }
        Ok(())
    }

    /// Injection time of input `seq` (1-based) in µs.
    pub fn injection_time_us(&self, seq: u64) -> u64 {
        (seq as f64 * 1e6 / self.input_rate).round() as u64
    }

    pub fn epochs(&self) -> EpochClock {
        EpochClock {
            per_epoch: self.input_rate * self.checkpoint_interval as f64 / 1000.0,
        }
    }
}

/// Epoch arithmetic: epoch `k` covers the inputs injected during the `k`-th
/// checkpoint interval; a boundary input belongs to the earlier epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochClock {
    per_epoch: f64,
}

impl EpochClock {
    /// Last producer sequence of epoch `k`.
    pub fn last_seq(&self, k: u64) -> u64 {
        (k as f64 * self.per_epoch + 1e-9).floor() as u64
    }

    pub fn epoch_of(&self, seq: u64) -> u64 {
        if seq == 0 {
            return 0;
        }
        let mut k = (seq as f64 / self.per_epoch).ceil().max(1.0) as u64;
        while self.last_seq(k) < seq {
            k += 1;
        }
        while k > 1 && self.last_seq(k - 1) >= seq {
            k -= 1;
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_profile_is_seeded_and_bounded() {
        let p = FaultProfile::named("standard", 100.0).unwrap();
        for seed in 0..50 {
            let plan = p.plan(seed, 10);
            assert_eq!(plan, p.plan(seed, 10));
            assert!((1..=3).contains(&plan.node_failures.len()));
            assert!(plan.node_failures.iter().all(|f| f.time_ms < 100.0 && f.node < 10));
            assert!(plan.node_failures.windows(2).all(|w| w[0].time_ms <= w[1].time_ms));
            assert_eq!(plan.packet_loss_probability, 0.01);
        }
        assert!(FaultProfile::named("none", 1.0).unwrap().plan(1, 3).node_failures.is_empty());
        assert!(FaultProfile::named("chaos", 1.0).is_err());
    }

    #[test]
    fn defaults_and_json_names() {
        let c = SimConfig::default();
        assert_eq!(c.nodes, 10);
        assert_eq!(c.input_rate, 50.0);
        assert_eq!(c.detection_delay, 50.0);
        let json = serde_json::to_value(&c).unwrap();
        for field in ["seed", "nodes", "channel_delay", "input_rate", "checkpoint_interval", "fault_plan", "mode", "max_sim_time"] {
            assert!(json.get(field).is_some(), "{field}");
        }
        assert_eq!(json["channel_delay"], serde_json::json!([1.0, 10.0]));
        let back: SimConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation() {
        assert!(SimConfig::default().validate().is_ok());
        let mut c = SimConfig::default();
        c.channel_delay = DelayRange::new(5.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.fault_plan.packet_loss_probability = 1.0;
        assert!(c.validate().is_err());
        let c = SimConfig::default().with_faults(FaultPlan::failures_at(&[10.0], 99));
        assert!(c.validate().is_err());
    }

    #[test]
    fn epoch_arithmetic() {
        let c = SimConfig::default();
        let e = c.epochs();
        assert_eq!(e.last_seq(1), 50);
        assert_eq!(e.epoch_of(50), 1);
        assert_eq!(e.epoch_of(51), 2);
        assert_eq!(e.epoch_of(1), 1);
        let fine = SimConfig::default().with_interval(50).epochs();
        assert_eq!(fine.last_seq(1), 2);
        assert_eq!(fine.last_seq(3), 7);
        assert_eq!(fine.epoch_of(3), 2);
        assert_eq!(fine.epoch_of(5), 2);
        assert_eq!(fine.epoch_of(6), 3);
        // the input at a boundary is injected exactly at the boundary time
        assert_eq!(c.injection_time_us(50), 1_000_000);
    }
}
