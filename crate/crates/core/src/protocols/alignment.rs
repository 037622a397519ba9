use std::collections::{BTreeMap, BTreeSet};

/// What a checkpoint marker says about its channel: how many elements with
/// producer sequence in `(lo, hi]` were sent on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerInfo {
    pub lo: u64,
    pub hi: u64,
    pub count: u32,
}

/// Marker alignment at one task. Channels do not preserve order, so a
/// channel counts as aligned for an epoch once its marker and every element
/// the marker announces have arrived. Epochs align in order.
#[derive(Debug, Clone)]
pub struct Alignment {
    channels: BTreeSet<String>,
    received: BTreeMap<String, BTreeMap<u64, u32>>,
    markers: BTreeMap<u64, BTreeMap<String, MarkerInfo>>,
    next_epoch: u64,
}

impl Alignment {
    pub fn new(channels: impl IntoIterator<Item = String>) -> Self {
        Alignment {
            channels: channels.into_iter().collect(),
            received: BTreeMap::new(),
            markers: BTreeMap::new(),
            next_epoch: 1,
        }
    }

    /// Forgets everything; the next epoch to align is `next_epoch`.
    pub fn reset(&mut self, next_epoch: u64) {
        self.received.clear();
        self.markers.clear();
        self.next_epoch = next_epoch;
    }

    pub fn next_epoch(&self) -> u64 {
        self.next_epoch
    }

    pub fn element(&mut self, channel: &str, seq: u64) {
        *self
            .received
            .entry(channel.to_string())
            .or_default()
            .entry(seq)
            .or_default() += 1;
    }

    pub fn marker(&mut self, channel: &str, epoch: u64, info: MarkerInfo) {
        if epoch >= self.next_epoch {
            self.markers
                .entry(epoch)
                .or_default()
                .insert(channel.to_string(), info);
        }
    }

    fn received_in(&self, channel: &str, lo: u64, hi: u64) -> u32 {
        self.received
            .get(channel)
            .map(|m| m.range(lo + 1..=hi).map(|(_, c)| c).sum())
            .unwrap_or(0)
    }

    /// The next epoch with every channel aligned, as `(epoch, lo, hi)`.
    pub fn poll(&self) -> Option<(u64, u64, u64)> {
        let ms = self.markers.get(&self.next_epoch)?;
        if ms.len() < self.channels.len() {
            return None;
        }
        let mut bounds = None;
        for ch in &self.channels {
            let m = ms.get(ch)?;
            if self.received_in(ch, m.lo, m.hi) != m.count {
                return None;
            }
            bounds = Some((m.lo, m.hi));
        }
        let (lo, hi) = bounds.unwrap_or((0, 0));
        Some((self.next_epoch, lo, hi))
    }

    /// Marks `epoch` done and moves on to the next one.
    pub fn complete(&mut self, epoch: u64) {
        if let Some(ms) = self.markers.remove(&epoch) {
            if let Some(hi) = ms.values().map(|m| m.hi).max() {
                for r in self.received.values_mut() {
                    *r = r.split_off(&(hi + 1));
                }
            }
        }
        self.next_epoch = epoch + 1;
    }
}

/// Elements sent per channel and producer sequence, for the counts a task
/// puts into the markers it forwards.
#[derive(Debug, Clone, Default)]
pub struct SentCounter {
    sent: BTreeMap<String, BTreeMap<u64, u32>>,
}

impl SentCounter {
    pub fn note(&mut self, channel: &str, seq: u64) {
        *self
            .sent
            .entry(channel.to_string())
            .or_default()
            .entry(seq)
            .or_default() += 1;
    }

    pub fn count(&self, channel: &str, lo: u64, hi: u64) -> u32 {
        self.sent
            .get(channel)
            .map(|m| m.range(lo + 1..=hi).map(|(_, c)| c).sum())
            .unwrap_or(0)
    }

    pub fn clear(&mut self) {
        self.sent.clear();
    }
}
