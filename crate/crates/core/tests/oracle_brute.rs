#[path = "support/interleave.rs"]
mod interleave;

use std::collections::BTreeSet;

use streamlab::model::text_inputs;
use streamlab::oracle::{enumerate_reference_runs, Channels};
use streamlab::pipelines::{concat_pipeline, ConcatConfig};

fn compare(window: usize, split: &[&[&str]]) {
    let g = concat_pipeline(ConcatConfig::windowed(window));
    let flat: Vec<&str> = split.iter().flat_map(|c| c.iter().copied()).collect();
    let inputs = text_inputs(&flat);
    let mut channels: Channels = Vec::new();
    let mut at = 0;
    for c in split {
        channels.push(inputs[at..at + c.len()].to_vec());
        at += c.len();
    }
    let named: Vec<Vec<String>> = split.iter().map(|c| c.iter().map(|s| s.to_string()).collect()).collect();
    let got: BTreeSet<Vec<String>> = enumerate_reference_runs(&g, &channels, flat.len())
        .unwrap()
        .iter()
        .map(|run| run.iter().map(|p| p.as_text().unwrap().to_string()).collect())
        .collect();
    assert_eq!(got, interleave::concat_runs(window, &named), "{split:?}");
}

#[test]
fn three_racing_channels() {
    compare(2, &[&["a", "b"], &["c"], &["d", "e"]]);
    compare(3, &[&["a"], &["b", "c"], &["d"]]);
}

#[test]
fn repeated_payloads() {
    compare(2, &[&["a", "a"], &["b", "a"]]);
}

#[test]
fn unbounded_window_equals_a_large_one() {
    let g = concat_pipeline(ConcatConfig::unbounded());
    let inputs = text_inputs(&["x", "y", "z"]);
    let channels: Channels = vec![inputs[..1].to_vec(), inputs[1..].to_vec()];
    let got: BTreeSet<Vec<String>> = enumerate_reference_runs(&g, &channels, 3)
        .unwrap()
        .iter()
        .map(|run| run.iter().map(|p| p.as_text().unwrap().to_string()).collect())
        .collect();
    let named = vec![vec!["x".to_string()], vec!["y".to_string(), "z".to_string()]];
    assert_eq!(got, interleave::concat_runs(usize::MAX, &named));
}
