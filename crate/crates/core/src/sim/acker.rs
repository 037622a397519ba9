use std::collections::BTreeMap;

/// XOR registers per producer sequence and ordered stage.
///
/// Stage `j < m` is the `j`-th order-sensitive operation; stage `m` is the
/// sink barrier. For each sequence the register pair of stage `j` tracks the
/// elements travelling towards stage `j` and the elements sitting in its
/// reorder buffer. Ids are non-zero, so an empty register reads zero.
///
/// The frontier of stage `j` is the largest sequence `s` such that every
/// input up to `s` has been injected, everything upstream of `j` with those
/// sequences is done, and nothing is still travelling towards `j`. Within a
/// generation frontiers only move forward and `F(j + 1) <= F(j)`.
#[derive(Debug, Clone)]
pub struct AckerRegister {
    stages: usize,
    regs: BTreeMap<u64, Vec<u64>>,
    injected: u64,
    frontiers: Vec<u64>,
}

impl AckerRegister {
    /// `ordered_stages` order-sensitive operations plus the barrier.
    pub fn new(ordered_stages: usize) -> Self {
        AckerRegister {
            stages: ordered_stages + 1,
            regs: BTreeMap::new(),
            injected: 0,
            frontiers: vec![0; ordered_stages + 1],
        }
    }

    /// Forgets everything and restarts all frontiers at `from`.
    pub fn reset(&mut self, from: u64) {
        self.regs.clear();
        self.injected = from;
        self.frontiers = vec![from; self.stages];
    }

    pub fn barrier_stage(&self) -> usize {
        self.stages - 1
    }

    pub fn frontier(&self, stage: usize) -> u64 {
        self.frontiers[stage]
    }

    pub fn injected(&self) -> u64 {
        self.injected
    }

    /// Inputs are injected in order, so one counter covers them.
    pub fn mark_injected(&mut self, seq: u64) {
        self.injected = self.injected.max(seq);
    }

    fn flip(&mut self, seq: u64, slot: usize, id: u64) {
        if seq <= self.frontiers[self.stages - 1] {
            return;
        }
        let stages = self.stages;
        let r = self.regs.entry(seq).or_insert_with(|| vec![0; 2 * stages]);
        r[slot] ^= id;
    }

    /// An element with `id` starts travelling towards `stage`.
    pub fn spawn(&mut self, stage: usize, seq: u64, id: u64) {
        self.flip(seq, 2 * stage, id);
    }

    /// The element arrived and was consumed (or given up).
    pub fn ack(&mut self, stage: usize, seq: u64, id: u64) {
        self.flip(seq, 2 * stage, id);
    }

    /// Arrival at an ordered stage: from in flight to buffered.
    pub fn arrive_buffered(&mut self, stage: usize, seq: u64, id: u64) {
        self.flip(seq, 2 * stage, id);
        self.flip(seq, 2 * stage + 1, id);
    }

    /// A buffered element was processed (or lost with its task).
    pub fn unbuffer(&mut self, stage: usize, seq: u64, id: u64) {
        self.flip(seq, 2 * stage + 1, id);
    }

    /// XOR of every register of the sequences in `(lo, hi]`.
    pub fn range_register(&self, lo: u64, hi: u64) -> u64 {
        self.regs
            .range(lo + 1..=hi)
            .flat_map(|(_, r)| r.iter())
            .fold(0, |a, b| a ^ b)
    }

    fn clear_through(&self, seq: u64, stage: usize) -> bool {
        if seq > self.injected {
            return false;
        }
        match self.regs.get(&seq) {
            None => true,
            Some(r) => (0..stage).all(|i| r[2 * i] == 0 && r[2 * i + 1] == 0) && r[2 * stage] == 0,
        }
    }

    /// Moves every frontier as far as it can go and returns the stages
    /// whose frontier changed.
    pub fn advance_watermark(&mut self) -> Vec<usize> {
        let mut moved = Vec::new();
        for j in 0..self.stages {
            let start = self.frontiers[j];
            let mut f = start;
            // never pass the upstream frontier; upstream stages were advanced first
            let cap = if j == 0 { self.injected } else { self.frontiers[j - 1] };
            while f < cap && self.clear_through(f + 1, j) {
                f += 1;
            }
            if f != start {
                self.frontiers[j] = f;
                moved.push(j);
            }
        }
        let done = self.frontiers[self.stages - 1];
        self.regs = self.regs.split_off(&(done + 1));
        moved
    }

    /// Sequences above the barrier frontier that still have live registers.
    pub fn live_seqs(&self) -> usize {
        self.regs.values().filter(|r| r.iter().any(|&v| v != 0)).count()
    }
}
