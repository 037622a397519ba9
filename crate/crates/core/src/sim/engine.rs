use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand_chacha::ChaCha8Rng;

use crate::model::{apply_operation, DataflowGraph, Element, Fnv, StateCell};
use crate::oracle::trace::{
    DeliveredItem, ElementRef, ExecutionTrace, StateVersion, TraceEvent, TraceHeader,
};
use crate::oracle::TaskId;
use crate::protocols::{
    Alignment, BarrierState, Bundle, Coordinator, GuaranteeMode, MarkerInfo, ProductionRecord,
    ProductionStore, SentCounter,
};
use crate::storage::Stores;

use super::acker::AckerRegister;
use super::config::{ms_to_us, SimConfig};
use super::result::{DeliveredBundle, LatencySample, SimEvent, SimEventKind, SimResult};
use super::rng::{channel_deliver, substream, Delivery};
use super::task::{Endpoint, Slot, TaskRt};
use super::SimError;

pub(super) const BARRIER: &str = "barrier";

#[derive(Debug, Clone)]
pub(super) enum Body {
    Data(Element),
    Marker { epoch: u64, info: MarkerInfo },
}

#[derive(Debug, Clone)]
pub(super) struct Msg {
    pub gen: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub src_inc: u64,
    pub dst_inc: u64,
    pub body: Body,
    pub sent_us: u64,
}

#[derive(Debug, Clone)]
pub(super) enum Ev {
    Inject(u64),
    Tick(u64),
    Arrive(u64),
    Resend(u64),
    Failure(usize),
    RecoveryStart,
    SnapshotRequest { task: usize, snapshot_id: u64, target: u64, gen: u64 },
    BarrierRequest { snapshot_id: u64, target: u64, gen: u64 },
    Accept { participant: String, snapshot_id: u64, slots: BTreeMap<String, Slot>, gen: u64 },
    WriteDone { task: usize, gen: u64 },
    RestoreDone { task: usize, gen: u64 },
    BarrierFetch { gen: u64 },
    RecoveryAck { gen: u64 },
    BundleArrive { id: u64, bundle: Bundle },
    BundleAck { id: u64 },
    BundleRetry { id: u64 },
    Audit,
}

impl Ev {
    /// Tie-break among events due at the same instant: inputs first, then
    /// ticks, so that a boundary input belongs to the epoch it closes.
    fn priority(&self) -> u8 {
        match self {
            Ev::Inject(_) => 0,
            Ev::Tick(_) => 1,
            _ => 2,
        }
    }
}

/// What finishing an element means for the acker.
#[derive(Debug, Clone, Copy)]
pub(super) struct Done {
    pub stage: usize,
    pub seq: u64,
    pub id: u64,
    pub ordered: bool,
}

pub(super) struct PendingWrite {
    pub record: ProductionRecord,
    pub outputs: Vec<Element>,
    pub done: Done,
}

pub(super) struct Sim<'a> {
    pub cfg: &'a SimConfig,
    pub graph: &'a DataflowGraph,
    pub inputs: &'a [Element],
    pub mode: GuaranteeMode,
    pub now: u64,
    queue: BinaryHeap<Reverse<(u64, u8, u64)>>,
    pending: BTreeMap<u64, Ev>,
    counter: u64,
    pub gen: u64,
    pub tasks: Vec<TaskRt>,
    /// Task indices per operation index, one per instance.
    pub by_op: Vec<Vec<usize>>,
    /// Successor operation indices per operation index.
    succ: Vec<Vec<usize>>,
    sink_op: usize,
    source_op: usize,
    pub node_inc: Vec<u64>,
    rngs: BTreeMap<String, ChaCha8Rng>,
    pub msgs: BTreeMap<u64, Msg>,
    next_msg: u64,
    pub acker: AckerRegister,
    pub barrier: BarrierState,
    pub barrier_align: Alignment,
    pub barrier_requests: Vec<(u64, u64)>,
    pub coordinator: Coordinator,
    pub round_slots: BTreeMap<u64, BTreeMap<String, BTreeMap<String, Slot>>>,
    pub committed_slots: BTreeMap<String, BTreeMap<String, Slot>>,
    pub stores: Stores,
    pub productions: ProductionStore,
    pub writes: BTreeMap<usize, PendingWrite>,
    /// Highest sequence appended to the replay log.
    pub appended: u64,
    /// Highest sequence sent in the current generation.
    pub sent_gen: u64,
    /// Highest sequence sent in any earlier generation.
    pub max_sent: u64,
    pub producer_sent: SentCounter,
    first_inject: BTreeMap<u64, u64>,
    pub last_delivery: BTreeMap<u64, u64>,
    /// Epoch bounds not yet committed (transactional).
    pub bounds: Vec<u64>,
    pub last_bound: u64,
    pub marker_hi: u64,
    /// Acknowledgements the running recovery still waits for.
    pub recovering: Option<usize>,
    pub barrier_flush_wait: bool,
    pub recovery_scheduled: bool,
    pub pending_again: bool,
    trace: ExecutionTrace,
    record_trace: bool,
    pub log: Vec<SimEvent>,
    pub delivered: Vec<DeliveredBundle>,
}

fn state_version(task: &str, partition: &str, elem: &Element, state: &StateCell) -> u64 {
    let mut h = Fnv::new();
    h.write_str(task);
    h.write_str(partition);
    h.write_u64(elem.id);
    h.write_str(&state.payload.canonical_json());
    h.finish()
}

impl<'a> Sim<'a> {
    pub fn new(
        graph: &'a DataflowGraph,
        inputs: &'a [Element],
        cfg: &'a SimConfig,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let mode = cfg.mode;
        let op_index = |name: &str| graph.op_index(name).expect("validated graph");
        let mut tasks = Vec::new();
        let mut by_op = vec![Vec::new(); graph.operations.len()];
        for op in graph.ops_in_order() {
            let oi = op_index(&op.name);
            let upstream: Vec<String> = if op.name == graph.source_name {
                vec!["producer".to_string()]
            } else {
                graph
                    .predecessors(&op.name)
                    .iter()
                    .flat_map(|p| (0..p.parallelism).map(move |i| format!("{}#{i}", p.name)))
                    .collect()
            };
            for i in 0..op.parallelism {
                let idx = tasks.len();
                let mut t = TaskRt::new(
                    format!("{}#{i}", op.name),
                    TaskId::new(&op.name, i),
                    oi,
                    idx % cfg.nodes,
                    upstream.clone(),
                );
                t.stage = graph.stage_of(&op.name);
                t.ordered = op.order_sensitive;
                t.stateful = op.is_stateful();
                by_op[oi].push(idx);
                tasks.push(t);
            }
        }
        let succ: Vec<Vec<usize>> = graph
            .operations
            .iter()
            .map(|o| graph.successors(&o.name).iter().map(|s| op_index(&s.name)).collect())
            .collect();
        let sink_op = op_index(&graph.sink_name);
        let source_op = op_index(&graph.source_name);
        for t in &mut tasks {
            t.outputs = if t.op == sink_op {
                vec![Endpoint::Barrier]
            } else {
                succ[t.op]
                    .iter()
                    .flat_map(|&s| by_op[s].iter().map(|&x| Endpoint::Task(x)))
                    .collect()
            };
        }
        let mut participants: Vec<String> = tasks
            .iter()
            .filter(|t| t.stateful)
            .map(|t| t.label.clone())
            .collect();
        participants.push(BARRIER.to_string());
        let max_open = if mode == GuaranteeMode::ExactlyOnceTransactional { usize::MAX } else { 1 };
        let sink_labels: Vec<String> = by_op[sink_op].iter().map(|&t| tasks[t].label.clone()).collect();
        let trace = ExecutionTrace::new(TraceHeader::new(mode.short_name(), cfg.seed));
        Ok(Sim {
            cfg,
            graph,
            inputs,
            mode,
            now: 0,
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            counter: 0,
            gen: 0,
            by_op,
            succ,
            sink_op,
            source_op,
            node_inc: vec![0; cfg.nodes],
            rngs: BTreeMap::new(),
            msgs: BTreeMap::new(),
            next_msg: 1,
            acker: AckerRegister::new(graph.ordered_stage_count()),
            barrier: BarrierState::new(mode),
            barrier_align: Alignment::new(sink_labels),
            barrier_requests: Vec::new(),
            coordinator: Coordinator::new(participants, max_open),
            round_slots: BTreeMap::new(),
            committed_slots: BTreeMap::new(),
            stores: Stores::open(&cfg.storage)?,
            productions: ProductionStore::default(),
            writes: BTreeMap::new(),
            appended: 0,
            sent_gen: 0,
            max_sent: 0,
            producer_sent: SentCounter::default(),
            first_inject: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
            bounds: Vec::new(),
            last_bound: 0,
            marker_hi: 0,
            recovering: None,
            barrier_flush_wait: false,
            recovery_scheduled: false,
            pending_again: false,
            trace,
            record_trace: cfg.record_trace,
            log: Vec::new(),
            delivered: Vec::new(),
            tasks,
        })
    }

    pub fn transactional(&self) -> bool {
        self.mode == GuaranteeMode::ExactlyOnceTransactional
    }

    pub fn strong(&self) -> bool {
        self.mode == GuaranteeMode::ExactlyOnceStrongProductions
    }

    pub fn us(&self, ms: f64) -> u64 {
        ms_to_us(ms)
    }

    pub fn schedule(&mut self, at: u64, ev: Ev) {
        let c = self.counter;
        self.counter += 1;
        self.queue.push(Reverse((at, ev.priority(), c)));
        self.pending.insert(c, ev);
    }

    pub fn after(&mut self, delay_ms: f64, ev: Ev) {
        let at = self.now + self.us(delay_ms);
        self.schedule(at, ev);
    }

    pub fn tr(&mut self, node: Option<usize>, event: TraceEvent) {
        if self.record_trace {
            self.trace.push(self.now, node, event);
        }
    }

    pub fn note(&mut self, kind: SimEventKind) {
        self.log.push(SimEvent {
            time_us: self.now,
            kind,
        });
    }

    pub fn label(&self, e: Endpoint) -> String {
        match e {
            Endpoint::Producer => "producer".into(),
            Endpoint::Task(t) => self.tasks[t].label.clone(),
            Endpoint::Barrier => BARRIER.into(),
        }
    }

    fn inc(&self, e: Endpoint) -> u64 {
        match e {
            Endpoint::Task(t) => self.node_inc[self.tasks[t].node],
            _ => 0,
        }
    }

    fn node_of(&self, e: Endpoint) -> Option<usize> {
        match e {
            Endpoint::Task(t) => Some(self.tasks[t].node),
            _ => None,
        }
    }

    pub fn stage_of(&self, e: Endpoint) -> usize {
        match e {
            Endpoint::Task(t) => self.tasks[t].stage,
            _ => self.acker.barrier_stage(),
        }
    }

    // ---- messaging -------------------------------------------------------

    pub fn send(&mut self, from: Endpoint, to: Endpoint, body: Body) {
        let id = self.next_msg;
        self.next_msg += 1;
        if let Body::Data(e) = &body {
            let stage = self.stage_of(to);
            self.acker.spawn(stage, e.seq(), e.id);
            if self.transactional() {
                let to_label = self.label(to);
                match from {
                    Endpoint::Producer => self.producer_sent.note(&to_label, e.seq()),
                    Endpoint::Task(t) => self.tasks[t].sent.note(&to_label, e.seq()),
                    Endpoint::Barrier => {}
                }
            }
        }
        let msg = Msg {
            gen: self.gen,
            from,
            to,
            src_inc: self.inc(from),
            dst_inc: self.inc(to),
            body,
            sent_us: self.now,
        };
        self.msgs.insert(id, msg);
        self.transmit(id);
    }

    pub(super) fn channel_fate(&mut self, from: &str, to: &str, delay: super::DelayRange) -> Delivery {
        let chan = format!("{from}->{to}");
        let seed = self.cfg.seed;
        let loss = self.cfg.fault_plan.packet_loss_probability;
        let rng = self
            .rngs
            .entry(chan)
            .or_insert_with_key(|name| substream(seed, name));
        channel_deliver(self.now, delay, loss, rng)
    }

    fn transmit(&mut self, id: u64) {
        let (from, to) = {
            let m = &self.msgs[&id];
            (m.from, m.to)
        };
        let (fl, tl) = (self.label(from), self.label(to));
        match self.channel_fate(&fl, &tl, self.cfg.channel_delay) {
            Delivery::At(t) => self.schedule(t, Ev::Arrive(id)),
            Delivery::Dropped => {
                let node = self.node_of(from);
                self.tr(node, TraceEvent::Drop { from: fl, to: tl });
                if self.mode.recovers() {
                    self.after(self.cfg.ack_timeout, Ev::Resend(id));
                }
            }
        }
    }

    fn on_resend(&mut self, id: u64) {
        let now = self.now;
        if let Some(m) = self.msgs.get_mut(&id).filter(|m| m.gen == self.gen) {
            m.sent_us = now;
            self.transmit(id);
        }
    }

    fn on_arrive(&mut self, id: u64) -> Result<(), SimError> {
        let Some(msg) = self.msgs.get(&id) else {
            return Ok(());
        };
        if msg.gen != self.gen {
            return Ok(());
        }
        let down = matches!(msg.to, Endpoint::Task(t) if self.tasks[t].down);
        if down || self.inc(msg.from) != msg.src_inc || self.inc(msg.to) != msg.dst_inc {
            // fenced off by a failure; left in flight for the audit
            return Ok(());
        }
        let msg = self.msgs.remove(&id).expect("present");
        let from_label = self.label(msg.from);
        match (msg.to, msg.body) {
            (Endpoint::Task(t), Body::Data(e)) => {
                let seq = e.seq();
                if self.transactional() {
                    self.tasks[t].align.element(&from_label, seq);
                }
                let task = &mut self.tasks[t];
                if task.ordered {
                    let (stage, id) = (task.stage, e.id);
                    self.acker.arrive_buffered(stage, seq, id);
                }
                self.tasks[t].buffer.insert(e.key.clone(), (e, msg.from));
                self.drain(t)?;
            }
            (Endpoint::Task(t), Body::Marker { epoch, info }) => {
                self.tasks[t].align.marker(&from_label, epoch, info);
                self.check_alignment(t);
            }
            (Endpoint::Barrier, Body::Data(e)) => {
                self.tr(
                    None,
                    TraceEvent::Output {
                        element_id: e.id,
                        key: e.key.clone(),
                    },
                );
                let (m, seq) = (self.acker.barrier_stage(), e.seq());
                self.acker.ack(m, seq, e.id);
                self.barrier.arrive(DeliveredItem {
                    id: e.id,
                    key: e.key,
                    payload: e.payload,
                });
                if self.transactional() {
                    self.barrier_align.element(&from_label, seq);
                    self.check_barrier_alignment();
                }
            }
            (Endpoint::Barrier, Body::Marker { epoch, info }) => {
                self.barrier_align.marker(&from_label, epoch, info);
                self.check_barrier_alignment();
            }
            (Endpoint::Producer, _) => {}
        }
        Ok(())
    }

    // ---- processing ------------------------------------------------------

    pub fn complete(&mut self, d: Done) {
        if d.ordered {
            self.acker.unbuffer(d.stage, d.seq, d.id);
        } else {
            self.acker.ack(d.stage, d.seq, d.id);
        }
    }

    pub fn drain(&mut self, t: usize) -> Result<(), SimError> {
        loop {
            let task = &self.tasks[t];
            if task.busy || task.down {
                break;
            }
            let Some(key) = task.buffer.keys().next() else {
                break;
            };
            if task.ordered && key.producer_seq > self.acker.frontier(task.stage) {
                break;
            }
            let (_, (e, _)) = self.tasks[t].buffer.pop_first().expect("non-empty");
            self.process(t, e)?;
        }
        self.check_requests(t);
        self.check_alignment(t);
        Ok(())
    }

    fn process(&mut self, t: usize, e: Element) -> Result<(), SimError> {
        let graph = self.graph;
        let task = &self.tasks[t];
        let op = &graph.operations[task.op];
        let done = Done {
            stage: task.stage,
            seq: e.seq(),
            id: e.id,
            ordered: task.ordered,
        };
        let node = Some(task.node);
        let task_id = task.id.clone();
        let label = task.label.clone();

        if self.strong() && task.stateful {
            if let Some(rec) = self.productions.lookup(&label, e.id) {
                let outputs = rec.outputs.clone();
                let sv = StateVersion {
                    version: rec.version,
                    parent: None,
                    partition: rec.partition.clone(),
                    seq: e.seq(),
                };
                self.tr(node, transform_event(&task_id, &e, &outputs, Some(sv)));
                self.emit(t, outputs);
                self.complete(done);
                return Ok(());
            }
        }

        let partition = op.partition_key(&e);
        let current = if task.stateful {
            Some(task.slots.get(&partition).cloned().unwrap_or_else(|| Slot {
                cell: op.initial_cell().expect("stateful op has an initial state"),
                version: None,
            }))
        } else {
            None
        };
        let (next, outputs) = apply_operation(op, current.as_ref().map(|s| &s.cell), &e)?;
        let mut sv = None;
        if let (Some(prev), Some(cell)) = (current, next) {
            let version = state_version(&label, &partition, &e, &cell);
            sv = Some(StateVersion {
                version,
                parent: prev.version,
                partition: partition.clone(),
                seq: e.seq(),
            });
            self.tasks[t].record(
                e.seq(),
                &partition,
                Slot {
                    cell,
                    version: Some(version),
                },
            );
        }
        self.tr(node, transform_event(&task_id, &e, &outputs, sv.clone()));
        if let Some(sv) = &sv {
            if self.mode == GuaranteeMode::ExactlyOnceDeterministic && !op.commutative {
                self.tr(node, TraceEvent::ReplayRecoverable { version: sv.version });
            }
            if self.strong() {
                let record = ProductionRecord {
                    task: label,
                    partition,
                    input_key: e.key.clone(),
                    outputs: outputs.clone(),
                    state: self.tasks[t].slots[&sv.partition].cell.payload.clone(),
                    version: sv.version,
                };
                self.tasks[t].busy = true;
                self.writes.insert(
                    t,
                    PendingWrite {
                        record,
                        outputs,
                        done,
                    },
                );
                let gen = self.gen;
                self.after(self.cfg.storage_latency, Ev::WriteDone { task: t, gen });
                return Ok(());
            }
        }
        self.emit(t, outputs);
        self.complete(done);
        Ok(())
    }

    fn on_write_done(&mut self, t: usize, gen: u64) -> Result<(), SimError> {
        if gen != self.gen {
            return Ok(());
        }
        let Some(w) = self.writes.remove(&t) else {
            return Ok(());
        };
        let node = Some(self.tasks[t].node);
        let event = TraceEvent::ProductionRecord {
            task: self.tasks[t].id.clone(),
            input_id: w.record.input_id(),
            version: w.record.version,
        };
        self.productions.persist(w.record);
        self.tr(node, event);
        self.tasks[t].busy = false;
        self.emit(t, w.outputs);
        self.complete(w.done);
        self.drain(t)
    }

    pub fn emit(&mut self, t: usize, outputs: Vec<Element>) {
        let op = self.tasks[t].op;
        for e in outputs {
            if op == self.sink_op {
                self.send(Endpoint::Task(t), Endpoint::Barrier, Body::Data(e));
                continue;
            }
            for si in 0..self.succ[op].len() {
                let s = self.succ[op][si];
                let inst = self.graph.operations[s].route(&e);
                let dest = self.by_op[s][inst];
                self.send(Endpoint::Task(t), Endpoint::Task(dest), Body::Data(e.clone()));
            }
        }
    }

    // ---- producer --------------------------------------------------------

    fn on_inject(&mut self, seq: u64) -> Result<(), SimError> {
        let elem = self.inputs[seq as usize - 1].clone();
        self.first_inject.insert(seq, self.now);
        self.stores.replay.append(&elem)?;
        self.appended = seq;
        if self.recovering.is_none() && self.sent_gen + 1 == seq {
            self.send_input(elem);
        }
        Ok(())
    }

    pub fn send_input(&mut self, elem: Element) {
        let seq = elem.seq();
        self.sent_gen = seq;
        self.acker.mark_injected(seq);
        self.tr(
            None,
            TraceEvent::Input {
                seq,
                element_id: elem.id,
                generation: self.gen,
                replay: seq <= self.max_sent,
            },
        );
        let inst = self.graph.operations[self.source_op].route(&elem);
        let dest = self.by_op[self.source_op][inst];
        self.send(Endpoint::Producer, Endpoint::Task(dest), Body::Data(elem));
    }

    pub fn source_tasks(&self) -> Vec<usize> {
        self.by_op[self.source_op].clone()
    }

    // ---- main loop -------------------------------------------------------

    /// Moves frontiers until nothing changes, draining ordered tasks and the
    /// barrier as they advance.
    fn settle(&mut self) -> Result<(), SimError> {
        loop {
            let moved = self.acker.advance_watermark();
            if moved.is_empty() {
                return Ok(());
            }
            let m = self.acker.barrier_stage();
            for j in moved {
                if j < m {
                    let ts: Vec<usize> = (0..self.tasks.len()).filter(|&t| self.tasks[t].stage == j).collect();
                    for t in ts {
                        self.drain(t)?;
                    }
                } else {
                    if !self.transactional() {
                        self.barrier.release_through(self.acker.frontier(m));
                        self.pump()?;
                    }
                    self.check_barrier_requests();
                }
            }
        }
    }

    fn quiescent(&self) -> bool {
        let n = self.inputs.len() as u64;
        self.appended == n
            && self.sent_gen == n
            && self.recovering.is_none()
            && !self.recovery_scheduled
            && !self.pending_again
            && self.msgs.is_empty()
            && self.writes.is_empty()
            && self.tasks.iter().all(|t| t.buffer.is_empty())
            && self.barrier.idle()
            && (!self.transactional() || self.coordinator.committed_target() == n)
    }

    fn census(&self) -> String {
        format!(
            "generation {}, injected {}/{}, in flight {}, buffered {}, barrier pending {}, unflushed {}, frontiers {:?}, recovering {:?}, committed {}, open rounds {:?}",
            self.gen,
            self.sent_gen,
            self.inputs.len(),
            self.msgs.len(),
            self.tasks.iter().map(|t| t.buffer.len()).sum::<usize>(),
            self.barrier.pending_len(),
            self.barrier.unflushed(),
            (0..=self.acker.barrier_stage()).map(|j| self.acker.frontier(j)).collect::<Vec<_>>(),
            self.recovering,
            self.coordinator.committed_target(),
            self.coordinator
                .open_rounds()
                .map(|r| (r.snapshot_id, r.target, r.awaiting.iter().cloned().collect::<Vec<_>>()))
                .collect::<Vec<_>>(),
        )
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Inject(seq) => self.on_inject(seq)?,
            Ev::Tick(k) => self.on_tick(k)?,
            Ev::Arrive(id) => self.on_arrive(id)?,
            Ev::Resend(id) => self.on_resend(id),
            Ev::Failure(node) => self.on_failure(node),
            Ev::RecoveryStart => self.on_recovery_start()?,
            Ev::SnapshotRequest {
                task,
                snapshot_id,
                target,
                gen,
            } => {
                if gen == self.gen && !self.tasks[task].down {
                    self.tasks[task].requests.push((snapshot_id, target));
                    self.check_requests(task);
                }
            }
            Ev::BarrierRequest {
                snapshot_id,
                target,
                gen,
            } => {
                if gen == self.gen {
                    self.barrier_requests.push((snapshot_id, target));
                    self.check_barrier_requests();
                }
            }
            Ev::Accept {
                participant,
                snapshot_id,
                slots,
                gen,
            } => self.on_accept(participant, snapshot_id, slots, gen)?,
            Ev::WriteDone { task, gen } => self.on_write_done(task, gen)?,
            Ev::RestoreDone { task, gen } => self.on_restore_done(task, gen)?,
            Ev::BarrierFetch { gen } => self.on_barrier_fetch(gen)?,
            Ev::RecoveryAck { gen } => self.on_recovery_ack(gen)?,
            Ev::BundleArrive { id, bundle } => self.on_bundle_arrive(id, bundle)?,
            Ev::BundleAck { id } => self.on_bundle_ack(id)?,
            Ev::BundleRetry { id } => self.on_bundle_retry(id),
            Ev::Audit => self.on_audit(),
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<SimResult, SimError> {
        let cfg = self.cfg;
        for seq in 1..=self.inputs.len() as u64 {
            self.schedule(cfg.injection_time_us(seq), Ev::Inject(seq));
        }
        if self.mode.recovers() {
            self.schedule(cfg.checkpoint_interval * 1000, Ev::Tick(1));
        }
        for f in &cfg.fault_plan.node_failures {
            self.schedule(ms_to_us(f.time_ms), Ev::Failure(f.node));
        }
        self.after(cfg.ack_timeout / 2.0, Ev::Audit);
        let limit = cfg.max_sim_time * 1000;
        while !self.quiescent() {
            let Some(Reverse((at, _, c))) = self.queue.pop() else {
                return Err(SimError::Diverged {
                    time_ms: self.now / 1000,
                    census: self.census(),
                });
            };
            if at > limit {
                return Err(SimError::Diverged {
                    time_ms: cfg.max_sim_time,
                    census: self.census(),
                });
            }
            self.now = at;
            let ev = self.pending.remove(&c).expect("scheduled event");
            self.handle(ev)?;
            self.settle()?;
        }
        Ok(self.finish())
    }

    fn finish(self) -> SimResult {
        let latencies = self
            .last_delivery
            .iter()
            .map(|(&seq, &t)| LatencySample {
                seq,
                ms: (t - self.first_inject[&seq]) as f64 / 1000.0,
            })
            .collect();
        SimResult {
            mode: self.mode,
            seed: self.cfg.seed,
            inputs: self.inputs.len() as u64,
            end_time_us: self.now,
            delivered: self.delivered,
            latencies,
            events: self.log,
            trace: if self.record_trace { self.trace } else { ExecutionTrace::default() },
        }
    }
}

fn transform_event(task: &TaskId, e: &Element, outputs: &[Element], state: Option<StateVersion>) -> TraceEvent {
    TraceEvent::Transform {
        task: task.clone(),
        input_id: e.id,
        input_key: e.key.clone(),
        provenance: e.provenance.iter().copied().collect(),
        outputs: outputs
            .iter()
            .map(|o| ElementRef {
                id: o.id,
                key: o.key.clone(),
            })
            .collect(),
        state,
    }
}
