use std::collections::BTreeMap;

use crate::model::OrderKey;
use crate::oracle::trace::DeliveredItem;

use super::{Bundle, BundleError, GuaranteeMode};

/// Output side of the sink: holds outputs until they may be released, then
/// ships them to the consumer one bundle at a time.
#[derive(Debug, Clone)]
pub struct BarrierState {
    /// Drop items at or below the consumer's last key.
    filter: bool,
    /// Bundles must be strictly increasing by key.
    ordered: bool,
    pending: BTreeMap<OrderKey, DeliveredItem>,
    ready: Vec<DeliveredItem>,
    in_flight: Option<(u64, Bundle)>,
    t_last: Option<OrderKey>,
    next_id: u64,
}

impl BarrierState {
    pub fn new(mode: GuaranteeMode) -> Self {
        BarrierState {
            filter: mode.claims_exactly_once(),
            ordered: mode.claims_exactly_once(),
            pending: BTreeMap::new(),
            ready: Vec::new(),
            in_flight: None,
            t_last: None,
            next_id: 1,
        }
    }

    pub fn arrive(&mut self, item: DeliveredItem) {
        self.pending.insert(item.key.clone(), item);
    }

    /// Releases, in key order, every pending item whose producer sequence is
    /// at most `through`. Returns how many items became ready.
    pub fn release_through(&mut self, through: u64) -> usize {
        let rest = self.pending.split_off(&OrderKey::input(through + 1));
        let released = std::mem::replace(&mut self.pending, rest);
        let before = self.ready.len();
        for (key, item) in released {
            if self.filter && self.t_last.as_ref().is_some_and(|t| &key <= t) {
                continue;
            }
            self.ready.push(item);
        }
        self.ready.len() - before
    }

    /// Starts the next bundle when none is in flight.
    pub fn next_bundle(&mut self) -> Result<Option<(u64, Bundle)>, BundleError> {
        if self.in_flight.is_some() || self.ready.is_empty() {
            return Ok(None);
        }
        let items = std::mem::take(&mut self.ready);
        let bundle = if self.ordered {
            Bundle::new(items)?
        } else {
            Bundle::unchecked(items)?
        };
        let id = self.next_id;
        self.next_id += 1;
        self.in_flight = Some((id, bundle.clone()));
        Ok(Some((id, bundle)))
    }

    pub fn in_flight(&self) -> Option<&(u64, Bundle)> {
        self.in_flight.as_ref()
    }

    /// The consumer acknowledged bundle `id`. Returns false for stale acks.
    pub fn acked(&mut self, id: u64) -> bool {
        match &self.in_flight {
            Some((cur, b)) if *cur == id => {
                self.t_last = Some(b.t_last.clone());
                self.in_flight = None;
                true
            }
            _ => false,
        }
    }

    /// Last key known to be at the consumer, as fetched during recovery.
    pub fn set_t_last(&mut self, t_last: Option<OrderKey>) {
        self.t_last = t_last;
    }

    pub fn t_last(&self) -> Option<&OrderKey> {
        self.t_last.as_ref()
    }

    /// Forgets outputs that were never released; replay regenerates them.
    pub fn discard_pending(&mut self) -> usize {
        std::mem::take(&mut self.pending).len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Released items not yet acknowledged by the consumer.
    pub fn unflushed(&self) -> bool {
        !self.ready.is_empty() || self.in_flight.is_some()
    }

    pub fn idle(&self) -> bool {
        self.pending.is_empty() && !self.unflushed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Payload;

    fn item(seq: u64) -> DeliveredItem {
        DeliveredItem {
            id: seq,
            key: OrderKey::new(seq, vec![0]),
            payload: Payload::Integer(seq as i64),
        }
    }

    #[test]
    fn releases_in_key_order_up_to_the_frontier() {
        let mut b = BarrierState::new(GuaranteeMode::ExactlyOnceDeterministic);
        for s in [3, 1, 2, 5] {
            b.arrive(item(s));
        }
        assert_eq!(b.release_through(3), 3);
        let (id, bundle) = b.next_bundle().unwrap().unwrap();
        assert_eq!(bundle.t_last, OrderKey::new(3, vec![0]));
        assert!(b.next_bundle().unwrap().is_none(), "one bundle in flight");
        assert!(b.acked(id));
        assert!(!b.acked(id));
        assert_eq!(b.pending_len(), 1);
    }

    #[test]
    fn exactly_once_filters_at_or_below_t_last() {
        let mut b = BarrierState::new(GuaranteeMode::ExactlyOnceDeterministic);
        b.set_t_last(Some(OrderKey::new(2, vec![0])));
        for s in 1..=4 {
            b.arrive(item(s));
        }
        assert_eq!(b.release_through(4), 2);
    }

    #[test]
    fn naive_does_not_filter() {
        let mut b = BarrierState::new(GuaranteeMode::AtLeastOnceNaive);
        b.set_t_last(Some(OrderKey::new(2, vec![0])));
        for s in 1..=4 {
            b.arrive(item(s));
        }
        assert_eq!(b.release_through(4), 4);
    }

    #[test]
    fn discard_keeps_released_items() {
        let mut b = BarrierState::new(GuaranteeMode::ExactlyOnceTransactional);
        b.arrive(item(1));
        b.arrive(item(2));
        b.release_through(1);
        assert_eq!(b.discard_pending(), 1);
        assert!(b.unflushed());
        assert!(!b.idle());
    }
}
