use std::collections::BTreeMap;

use crate::model::StateCell;
use crate::oracle::trace::TraceEvent;
use crate::protocols::{Bundle, MarkerInfo};

use super::config::DelayRange;
use super::engine::{Body, Done, Ev, Sim, BARRIER};
use super::result::{DeliveredBundle, SimEventKind};
use super::rng::Delivery;
use super::task::{Endpoint, Slot};
use super::SimError;

fn payloads(slots: &BTreeMap<String, Slot>) -> BTreeMap<String, crate::model::Payload> {
    slots
        .iter()
        .map(|(p, s)| (p.clone(), s.cell.payload.clone()))
        .collect()
}

impl Sim<'_> {
    // ---- snapshot rounds and epochs --------------------------------------

    pub(super) fn on_tick(&mut self, k: u64) -> Result<(), SimError> {
        let next = (k + 1) * self.cfg.checkpoint_interval * 1000;
        self.schedule(next, Ev::Tick(k + 1));
        let target = self.cfg.epochs().last_seq(k).min(self.appended);
        if self.transactional() {
            if target > self.last_bound {
                self.last_bound = target;
                self.bounds.push(target);
                if self.recovering.is_none() {
                    self.open_epoch(target);
                }
            }
            return Ok(());
        }
        if self.recovering.is_some() {
            return Ok(());
        }
        let Some(round) = self.coordinator.initiate(target) else {
            return Ok(());
        };
        let (id, target, gen) = (round.snapshot_id, round.target, self.gen);
        for t in 0..self.tasks.len() {
            if self.tasks[t].stateful {
                self.after(
                    self.cfg.control_delay,
                    Ev::SnapshotRequest {
                        task: t,
                        snapshot_id: id,
                        target,
                        gen,
                    },
                );
            }
        }
        self.after(
            self.cfg.control_delay,
            Ev::BarrierRequest {
                snapshot_id: id,
                target,
                gen,
            },
        );
        Ok(())
    }

    /// Opens the epoch ending at `hi` and sends its markers from the producer.
    pub(super) fn open_epoch(&mut self, hi: u64) {
        let Some(round) = self.coordinator.initiate(hi) else {
            return;
        };
        let epoch = round.snapshot_id;
        let lo = self.marker_hi;
        self.marker_hi = hi;
        for s in self.source_tasks() {
            let label = self.tasks[s].label.clone();
            let count = self.producer_sent.count(&label, lo, hi);
            self.send(
                Endpoint::Producer,
                Endpoint::Task(s),
                Body::Marker {
                    epoch,
                    info: MarkerInfo { lo, hi, count },
                },
            );
        }
    }

    pub(super) fn check_requests(&mut self, t: usize) {
        let task = &self.tasks[t];
        if task.requests.is_empty() || task.down {
            return;
        }
        let frontier = self.acker.frontier(task.stage);
        let (ready, waiting): (Vec<_>, Vec<_>) = task
            .requests
            .iter()
            .partition(|&&(_, target)| frontier >= target && task.settled_through(target));
        if ready.is_empty() {
            return;
        }
        self.tasks[t].requests = waiting;
        for (id, target) in ready {
            let slots = self.tasks[t].capture(target);
            let participant = self.tasks[t].label.clone();
            let gen = self.gen;
            self.after(
                self.cfg.storage_latency + self.cfg.control_delay,
                Ev::Accept {
                    participant,
                    snapshot_id: id,
                    slots,
                    gen,
                },
            );
        }
    }

    pub(super) fn check_barrier_requests(&mut self) {
        let f = self.acker.frontier(self.acker.barrier_stage());
        let (ready, waiting): (Vec<_>, Vec<_>) =
            self.barrier_requests.iter().partition(|&&(_, target)| f >= target);
        self.barrier_requests = waiting;
        for (id, _) in ready {
            let gen = self.gen;
            self.after(
                self.cfg.control_delay,
                Ev::Accept {
                    participant: BARRIER.into(),
                    snapshot_id: id,
                    slots: BTreeMap::new(),
                    gen,
                },
            );
        }
    }

    /// Forwards markers of every aligned epoch whose elements this task has
    /// fully processed, after persisting the prepared state.
    pub(super) fn check_alignment(&mut self, t: usize) {
        if !self.transactional() || self.tasks[t].down {
            return;
        }
        while let Some((epoch, lo, hi)) = self.tasks[t].align.poll() {
            if !self.tasks[t].settled_through(hi) {
                break;
            }
            self.tasks[t].align.complete(epoch);
            if self.tasks[t].stateful {
                let slots = self.tasks[t].capture(hi);
                let participant = self.tasks[t].label.clone();
                let gen = self.gen;
                self.after(
                    self.cfg.storage_latency + self.cfg.control_delay,
                    Ev::Accept {
                        participant,
                        snapshot_id: epoch,
                        slots,
                        gen,
                    },
                );
            }
            for dest in self.tasks[t].outputs.clone() {
                let count = self.tasks[t].sent.count(&self.label(dest), lo, hi);
                self.send(
                    Endpoint::Task(t),
                    dest,
                    Body::Marker {
                        epoch,
                        info: MarkerInfo { lo, hi, count },
                    },
                );
            }
        }
    }

    /// Every sink marker of an epoch arrived together with its outputs: the
    /// epoch has left the data flow.
    pub(super) fn check_barrier_alignment(&mut self) {
        while let Some((epoch, _, _)) = self.barrier_align.poll() {
            self.barrier_align.complete(epoch);
            let gen = self.gen;
            self.after(
                self.cfg.control_delay,
                Ev::Accept {
                    participant: BARRIER.into(),
                    snapshot_id: epoch,
                    slots: BTreeMap::new(),
                    gen,
                },
            );
        }
    }

    pub(super) fn on_accept(
        &mut self,
        participant: String,
        snapshot_id: u64,
        slots: BTreeMap<String, Slot>,
        gen: u64,
    ) -> Result<(), SimError> {
        if gen != self.gen {
            return Ok(());
        }
        let states = payloads(&slots);
        self.round_slots
            .entry(snapshot_id)
            .or_default()
            .insert(participant.clone(), slots);
        if self.coordinator.accept(snapshot_id, &participant, states) {
            self.try_commit()?;
        }
        Ok(())
    }

    fn try_commit(&mut self) -> Result<(), SimError> {
        while self.coordinator.ready() {
            let snap = self
                .coordinator
                .commit()
                .expect("a ready round commits");
            self.stores.snapshots.put_commit(&snap)?;
            let target = snap.last_key.producer_seq;
            let mut slots = self.round_slots.remove(&snap.snapshot_id).unwrap_or_default();
            slots.remove(BARRIER);
            self.committed_slots = slots;
            self.tr(
                None,
                TraceEvent::SnapshotCommit {
                    snapshot_id: snap.snapshot_id,
                    last_key: snap.last_key.clone(),
                    states: snap.persisted_states(),
                },
            );
            self.note(SimEventKind::SnapshotCommit {
                snapshot_id: snap.snapshot_id,
                last_seq: target,
            });
            if self.transactional() {
                self.tr(
                    None,
                    TraceEvent::EpochCommit {
                        epoch: snap.snapshot_id,
                        last_seq: target,
                    },
                );
                self.bounds.retain(|&b| b > target);
                self.barrier.release_through(target);
                self.pump()?;
            }
            self.stores.replay.truncate_through(target)?;
            for t in &mut self.tasks {
                t.fold(target);
            }
        }
        Ok(())
    }

    // ---- failures and recovery -------------------------------------------

    pub(super) fn on_failure(&mut self, node: usize) {
        self.tr(Some(node), TraceEvent::Failure { node });
        self.note(SimEventKind::Failure { node });
        self.node_inc[node] += 1;
        let recovers = self.mode.recovers();
        for t in 0..self.tasks.len() {
            if self.tasks[t].node != node {
                continue;
            }
            let mut lost: Vec<Done> = self.tasks[t]
                .buffer
                .values()
                .map(|(e, _)| Done {
                    stage: self.tasks[t].stage,
                    seq: e.seq(),
                    id: e.id,
                    ordered: self.tasks[t].ordered,
                })
                .collect();
            if let Some(w) = self.writes.remove(&t) {
                lost.push(w.done);
            }
            self.tasks[t].clear_volatile();
            if recovers {
                self.tasks[t].down = true;
            } else {
                // the node restarts empty and whatever it held is given up
                for d in lost {
                    self.complete(d);
                }
            }
        }
        if recovers {
            if self.recovering.is_some() || self.recovery_scheduled {
                self.pending_again = true;
            } else {
                self.recovery_scheduled = true;
                self.after(self.cfg.detection_delay, Ev::RecoveryStart);
            }
        }
    }

    pub(super) fn on_recovery_start(&mut self) -> Result<(), SimError> {
        self.recovery_scheduled = false;
        if self.recovering.is_some() {
            self.pending_again = true;
            return Ok(());
        }
        self.max_sent = self.max_sent.max(self.sent_gen);
        self.gen += 1;
        let open: Vec<u64> = self.coordinator.open_rounds().map(|r| r.snapshot_id).collect();
        for snapshot_id in open {
            self.tr(
                None,
                TraceEvent::SnapshotAbort {
                    snapshot_id,
                    reason: "recovery".into(),
                },
            );
        }
        self.coordinator.abort_all();
        self.round_slots.clear();
        self.msgs.clear();
        self.writes.clear();
        let from = self.coordinator.committed_target();
        self.acker.reset(from);
        self.sent_gen = from;
        self.marker_hi = from;
        self.producer_sent.clear();
        for t in &mut self.tasks {
            t.clear_volatile();
            t.down = true;
        }
        self.barrier.discard_pending();
        self.barrier_requests.clear();
        self.recovering = Some(self.tasks.len() + 1);
        let gen = self.gen;
        for t in 0..self.tasks.len() {
            self.after(self.cfg.storage_latency, Ev::RestoreDone { task: t, gen });
        }
        if self.barrier.unflushed() {
            self.barrier_flush_wait = true;
        } else {
            self.after(self.cfg.consumer_ack_latency, Ev::BarrierFetch { gen });
        }
        Ok(())
    }

    pub(super) fn on_restore_done(&mut self, t: usize, gen: u64) -> Result<(), SimError> {
        if gen != self.gen {
            return Ok(());
        }
        let label = self.tasks[t].label.clone();
        let slots: BTreeMap<String, Slot> = if self.strong() {
            self.productions
                .latest_states(&label)
                .into_iter()
                .map(|(p, (payload, v))| {
                    (
                        p,
                        Slot {
                            cell: StateCell::new(payload),
                            version: Some(v),
                        },
                    )
                })
                .collect()
        } else {
            let snap = self.stores.snapshots.latest()?;
            let stored = snap.and_then(|s| s.states.get(&label).cloned()).unwrap_or_default();
            let side = self.committed_slots.get(&label);
            stored
                .into_iter()
                .map(|(p, payload)| {
                    let slot = match side.and_then(|m| m.get(&p)) {
                        Some(s) if s.cell.payload == payload => s.clone(),
                        _ => Slot {
                            cell: StateCell::new(payload),
                            version: None,
                        },
                    };
                    (p, slot)
                })
                .collect()
        };
        self.tasks[t].install(slots);
        self.tasks[t].down = false;
        self.after(self.cfg.control_delay, Ev::RecoveryAck { gen });
        Ok(())
    }

    pub(super) fn on_barrier_fetch(&mut self, gen: u64) -> Result<(), SimError> {
        if gen != self.gen {
            return Ok(());
        }
        let t_last = self.stores.consumer.last_bundle()?.map(|b| b.t_last);
        self.barrier.set_t_last(t_last);
        self.after(self.cfg.control_delay, Ev::RecoveryAck { gen });
        Ok(())
    }

    pub(super) fn on_recovery_ack(&mut self, gen: u64) -> Result<(), SimError> {
        if gen != self.gen {
            return Ok(());
        }
        if let Some(n) = self.recovering.as_mut() {
            *n -= 1;
            if *n == 0 {
                self.finish_recovery()?;
            }
        }
        Ok(())
    }

    fn finish_recovery(&mut self) -> Result<(), SimError> {
        let from = self.coordinator.committed_target();
        let replay = self.stores.replay.replay_from(from)?;
        let replayed = replay.iter().filter(|e| e.seq() <= self.max_sent).count() as u64;
        self.recovering = None;
        self.tr(
            None,
            TraceEvent::Recovery {
                generation: self.gen,
                from_seq: from,
                replayed,
            },
        );
        self.note(SimEventKind::Recovery {
            generation: self.gen,
            from_seq: from,
            replayed,
        });
        if self.transactional() {
            let next = self.coordinator.next_id();
            for t in &mut self.tasks {
                t.align.reset(next);
            }
            self.barrier_align.reset(next);
        }
        for e in replay {
            self.send_input(e);
        }
        if self.transactional() {
            for b in self.bounds.clone() {
                if b > from {
                    self.open_epoch(b);
                }
            }
        }
        if self.pending_again {
            self.pending_again = false;
            self.recovery_scheduled = true;
            self.after(0.0, Ev::RecoveryStart);
        }
        Ok(())
    }

    pub(super) fn on_audit(&mut self) {
        self.after(self.cfg.ack_timeout / 2.0, Ev::Audit);
        let timeout = self.us(self.cfg.ack_timeout);
        let overdue: Vec<u64> = self
            .msgs
            .iter()
            .filter(|(_, m)| m.sent_us + timeout <= self.now)
            .map(|(&id, _)| id)
            .collect();
        if overdue.is_empty() {
            return;
        }
        if self.mode.recovers() {
            // a fenced-off message outlived the failure that caused it
            if self.recovering.is_none() && !self.recovery_scheduled && !self.pending_again {
                self.note(SimEventKind::Stall {
                    overdue: overdue.len(),
                });
                self.recovery_scheduled = true;
                self.after(0.0, Ev::RecoveryStart);
            }
            return;
        }
        self.note(SimEventKind::Stall {
            overdue: overdue.len(),
        });
        for id in overdue {
            let m = self.msgs.remove(&id).expect("present");
            if let Body::Data(e) = m.body {
                let stage = self.stage_of(m.to);
                self.acker.ack(stage, e.seq(), e.id);
            }
        }
    }

    // ---- bundles ---------------------------------------------------------

    pub(super) fn pump(&mut self) -> Result<(), SimError> {
        if let Some((id, bundle)) = self
            .barrier
            .next_bundle()
            .map_err(|e| SimError::InvalidConfig(format!("barrier produced a bad bundle: {e}")))?
        {
            self.send_bundle(id, bundle);
        }
        Ok(())
    }

    fn link(&mut self, from: &str, to: &str, delay_ms: f64) -> Delivery {
        self.channel_fate(from, to, DelayRange::new(delay_ms, delay_ms))
    }

    fn send_bundle(&mut self, id: u64, bundle: Bundle) {
        match self.link(BARRIER, "consumer", self.cfg.control_delay) {
            Delivery::At(t) => self.schedule(t, Ev::BundleArrive { id, bundle }),
            Delivery::Dropped => self.tr(
                None,
                TraceEvent::Drop {
                    from: BARRIER.into(),
                    to: "consumer".into(),
                },
            ),
        }
        self.after(self.cfg.barrier_retry, Ev::BundleRetry { id });
    }

    pub(super) fn on_bundle_arrive(&mut self, id: u64, bundle: Bundle) -> Result<(), SimError> {
        let fresh = self.stores.consumer.last_bundle()?.as_ref() != Some(&bundle);
        self.stores.consumer.receive(&bundle)?;
        if fresh {
            for item in &bundle.items {
                self.last_delivery.insert(item.key.producer_seq, self.now);
            }
            self.tr(
                None,
                TraceEvent::Deliver {
                    bundle_id: id,
                    t_last: bundle.t_last.clone(),
                    items: bundle.items.clone(),
                },
            );
            self.delivered.push(DeliveredBundle {
                time_us: self.now,
                bundle,
            });
        }
        match self.link("consumer", BARRIER, self.cfg.consumer_ack_latency) {
            Delivery::At(t) => self.schedule(t, Ev::BundleAck { id }),
            Delivery::Dropped => self.tr(
                None,
                TraceEvent::Drop {
                    from: "consumer".into(),
                    to: BARRIER.into(),
                },
            ),
        }
        Ok(())
    }

    pub(super) fn on_bundle_ack(&mut self, id: u64) -> Result<(), SimError> {
        if self.barrier.acked(id) {
            self.pump()?;
            if self.barrier_flush_wait && !self.barrier.unflushed() {
                self.barrier_flush_wait = false;
                let gen = self.gen;
                self.after(self.cfg.consumer_ack_latency, Ev::BarrierFetch { gen });
            }
        }
        Ok(())
    }

    pub(super) fn on_bundle_retry(&mut self, id: u64) {
        if let Some((cur, bundle)) = self.barrier.in_flight() {
            if *cur == id {
                let bundle = bundle.clone();
                self.send_bundle(id, bundle);
            }
        }
    }
}
