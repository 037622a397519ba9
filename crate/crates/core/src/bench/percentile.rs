use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
}

/// Nearest-rank percentile of an ascending slice: the smallest sample with
/// at least `p` percent of the samples at or below it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// p50/p75/p95/p99 of the samples; `None` when there are none.
pub fn latency_report(samples: &[f64]) -> Option<Percentiles> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Percentiles {
        p50: nearest_rank(&sorted, 50.0)?,
        p75: nearest_rank(&sorted, 75.0)?,
        p95: nearest_rank(&sorted, 95.0)?,
        p99: nearest_rank(&sorted, 99.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_ranks() {
        let samples: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let p = latency_report(&samples).unwrap();
        assert_eq!((p.p50, p.p75, p.p95, p.p99), (50.0, 75.0, 95.0, 99.0));
    }

    #[test]
    fn single_and_empty() {
        let p = latency_report(&[42.0]).unwrap();
        assert_eq!((p.p50, p.p75, p.p95, p.p99), (42.0, 42.0, 42.0, 42.0));
        assert!(latency_report(&[]).is_none());
    }

    proptest! {
        #[test]
        fn monotone_and_drawn_from_the_samples(samples in prop::collection::vec(0.0f64..1e4, 1..200)) {
            let p = latency_report(&samples).unwrap();
            prop_assert!(p.p50 <= p.p75 && p.p75 <= p.p95 && p.p95 <= p.p99);
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            for (q, v) in [(50.0, p.p50), (75.0, p.p75), (95.0, p.p95), (99.0, p.p99)] {
                // count-based definition checked against the full sort
                let below = sorted.iter().filter(|s| **s <= v).count() as f64;
                let strictly = sorted.iter().filter(|s| **s < v).count() as f64;
                prop_assert!(below >= q / 100.0 * sorted.len() as f64);
                prop_assert!(strictly < q / 100.0 * sorted.len() as f64);
            }
        }
    }
}
