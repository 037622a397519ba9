use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Position of an element in the global total order.
///
/// Inputs get a monotone producer sequence number and an empty path; each
/// derivation appends the index of the child among its siblings. Comparing
/// the sequence first and the path lexicographically second puts every
/// derivative right after its parent and before the next input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct OrderKey {
    pub producer_seq: u64,
    #[serde(default)]
    pub child_path: Vec<u32>,
}

impl OrderKey {
    /// The smallest key; no input ever carries it because sequences start at 1.
    pub const MIN: OrderKey = OrderKey {
        producer_seq: 0,
        child_path: Vec::new(),
    };

    pub fn input(producer_seq: u64) -> Self {
        OrderKey {
            producer_seq,
            child_path: Vec::new(),
        }
    }

    pub fn new(producer_seq: u64, child_path: Vec<u32>) -> Self {
        OrderKey {
            producer_seq,
            child_path,
        }
    }

    pub fn child(&self, index: u32) -> OrderKey {
        derive_order_key(self, index)
    }

    /// Stable 64-bit identifier of the element holding this key (FNV-1a).
    pub fn element_id(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.producer_seq);
        h.write_u64(self.child_path.len() as u64);
        for c in &self.child_path {
            h.write_u64(*c as u64);
        }
        // zero is reserved so that an empty XOR register never looks like a live id
        h.finish().max(1)
    }
}

pub fn derive_order_key(parent: &OrderKey, child_index: u32) -> OrderKey {
    let mut child_path = Vec::with_capacity(parent.child_path.len() + 1);
    child_path.extend_from_slice(&parent.child_path);
    child_path.push(child_index);
    OrderKey {
        producer_seq: parent.producer_seq,
        child_path,
    }
}

pub fn compare_order_keys(a: &OrderKey, b: &OrderKey) -> Ordering {
    a.producer_seq
        .cmp(&b.producer_seq)
        .then_with(|| a.child_path.cmp(&b.child_path))
}

impl Ord for OrderKey {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_order_keys(self, other)
    }
}

impl PartialOrd for OrderKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for OrderKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{:?})", self.producer_seq, self.child_path)
    }
}

/// FNV-1a, used wherever a hash must be identical across processes and platforms.
#[derive(Debug, Clone, Copy)]
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn write_str(&mut self, s: &str) {
        self.write_u64(s.len() as u64);
        self.write(s.as_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

pub fn stable_hash_str(s: &str) -> u64 {
    let mut h = Fnv::new();
    h.write_str(s);
    h.finish()
}
