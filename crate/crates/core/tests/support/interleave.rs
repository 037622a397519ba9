//! Brute-force reference for the window-2 concat graph, independent of the
//! oracle's search: list every merge of the input channels that keeps each
//! channel's order, then fold the window over each merge.

use std::collections::BTreeSet;

/// Every interleaving of `channels` that preserves the order inside each one.
pub fn merges<T: Clone>(channels: &[Vec<T>]) -> Vec<Vec<T>> {
    let total: usize = channels.iter().map(Vec::len).sum();
    let mut out = Vec::new();
    let mut pos = vec![0; channels.len()];
    let mut cur = Vec::with_capacity(total);
    fn go<T: Clone>(
        channels: &[Vec<T>],
        pos: &mut [usize],
        cur: &mut Vec<T>,
        total: usize,
        out: &mut Vec<Vec<T>>,
    ) {
        if cur.len() == total {
            out.push(cur.clone());
            return;
        }
        for c in 0..channels.len() {
            if pos[c] < channels[c].len() {
                cur.push(channels[c][pos[c]].clone());
                pos[c] += 1;
                go(channels, pos, cur, total, out);
                pos[c] -= 1;
                cur.pop();
            }
        }
    }
    go(channels, &mut pos, &mut cur, total, &mut out);
    out
}

/// Outputs of a windowed concatenation fed `order`.
pub fn fold_window(window: usize, order: &[String]) -> Vec<String> {
    let mut held: Vec<&str> = Vec::new();
    order
        .iter()
        .map(|w| {
            held.push(w);
            if held.len() > window {
                held.remove(0);
            }
            held.concat()
        })
        .collect()
}

pub fn concat_runs(window: usize, channels: &[Vec<String>]) -> BTreeSet<Vec<String>> {
    merges(channels).iter().map(|m| fold_window(window, m)).collect()
}

#[test]
fn merge_counts_are_binomial() {
    let a: Vec<u8> = vec![1, 2];
    let b: Vec<u8> = vec![3, 4, 5];
    assert_eq!(merges(&[a.clone(), b.clone()]).len(), 10);
    assert_eq!(merges(&[a, vec![]]).len(), 1);
    assert_eq!(merges::<u8>(&[]).len(), 1);
}
