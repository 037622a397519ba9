//! The built-in workloads: windowed concatenation, inverted-index
//! maintenance and an order-insensitive uppercase control.

mod corpus;
mod index;

use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

use crate::model::{
    build_graph, inputs_from_payloads, DataflowGraph, Element, OperationSpec, PartitionKey,
    Payload, Transition,
};

pub use corpus::{generate_corpus, read_corpus, write_corpus, CorpusError, CorpusSpec, Document};
pub use index::{batch_index_oracle, materialize_index, IndexReplayError, MaterializedIndex};

/// Reducer instances of the index pipeline.
pub const INDEX_PARALLELISM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcatConfig {
    /// Texts kept in the window; `None` keeps all of them.
    pub window: Option<NonZeroUsize>,
}

impl ConcatConfig {
    pub fn windowed(n: usize) -> Self {
        ConcatConfig {
            window: NonZeroUsize::new(n.max(1)),
        }
    }

    pub fn unbounded() -> Self {
        ConcatConfig { window: None }
    }
}

impl Default for ConcatConfig {
    fn default() -> Self {
        Self::windowed(2)
    }
}

fn chain(ops: Vec<OperationSpec>) -> DataflowGraph {
    let edges = ops
        .windows(2)
        .map(|w| (w[0].name.clone(), w[1].name.clone()))
        .collect();
    build_graph(ops, edges).expect("built-in pipelines are valid")
}

/// `src -> concat -> snk`, where `concat` is stateful and order sensitive.
pub fn concat_pipeline(cfg: ConcatConfig) -> DataflowGraph {
    chain(vec![
        OperationSpec::map("src", Transition::Identity),
        OperationSpec::stateful(
            "concat",
            Transition::Concat {
                window: cfg.window.map(NonZeroUsize::get),
            },
            Payload::List(Vec::new()),
        ),
        OperationSpec::map("snk", Transition::Identity),
    ])
}

/// `src -> tokenize -> index -> snk`. The reducer is partitioned by word and
/// emits one change record per distinct word of each document.
pub fn inverted_index_pipeline() -> DataflowGraph {
    chain(vec![
        OperationSpec::map("src", Transition::Identity),
        OperationSpec::flat_map("tokenize", Transition::Tokenize),
        OperationSpec::stateful("index", Transition::IndexReduce, Payload::List(Vec::new()))
            .partitioned_by(PartitionKey::Word)
            .with_parallelism(INDEX_PARALLELISM),
        OperationSpec::map("snk", Transition::Identity),
    ])
}

/// Stateless and commutative; delivery order never matters.
pub fn uppercase_pipeline() -> DataflowGraph {
    chain(vec![
        OperationSpec::map("src", Transition::Identity),
        OperationSpec::map("upper", Transition::Uppercase),
        OperationSpec::map("snk", Transition::Identity),
    ])
}

/// `n` single-letter texts cycling through the alphabet.
pub fn letter_inputs(n: usize) -> Vec<Element> {
    inputs_from_payloads((0..n).map(|i| Payload::text(((b'a' + (i % 26) as u8) as char).to_string())))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pipeline {0:?} (expected concat, index or uppercase)")]
pub struct UnknownPipeline(pub String);

/// A named pipeline together with a seeded input generator, as used by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Concat,
    Index,
    Uppercase,
}

impl PipelineKind {
    pub fn graph(self) -> DataflowGraph {
        match self {
            PipelineKind::Concat => concat_pipeline(ConcatConfig::default()),
            PipelineKind::Index => inverted_index_pipeline(),
            PipelineKind::Uppercase => uppercase_pipeline(),
        }
    }

    /// `n` inputs; the index pipeline draws a Zipf corpus from `seed`.
    pub fn inputs(self, n: usize, seed: u64) -> Vec<Element> {
        match self {
            PipelineKind::Concat | PipelineKind::Uppercase => letter_inputs(n),
            PipelineKind::Index => generate_corpus(&CorpusSpec {
                seed,
                documents: n,
                ..CorpusSpec::default()
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Concat => "concat",
            PipelineKind::Index => "index",
            PipelineKind::Uppercase => "uppercase",
        }
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = UnknownPipeline;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(PipelineKind::Concat),
            "index" | "inverted_index" => Ok(PipelineKind::Index),
            "uppercase" => Ok(PipelineKind::Uppercase),
            other => Err(UnknownPipeline(other.to_string())),
        }
    }
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{apply_operation, text_inputs, StateCell};

    /// Runs every input through the graph in order on a single instance per op.
    fn run_in_order(g: &DataflowGraph, inputs: &[Element]) -> Vec<Payload> {
        let mut states: BTreeMap<(String, String), StateCell> = BTreeMap::new();
        let mut out = Vec::new();
        for input in inputs {
            let mut wave = vec![input.clone()];
            for op in g.ops_in_order() {
                let mut next = Vec::new();
                for e in wave {
                    let slot = (op.name.clone(), op.partition_key(&e));
                    let (s, derived) = apply_operation(op, states.get(&slot), &e).unwrap();
                    if let Some(s) = s {
                        states.insert(slot, s);
                    }
                    next.extend(derived);
                }
                wave = next;
            }
            out.extend(wave.into_iter().map(|e| e.payload));
        }
        out
    }

    fn texts(p: &[Payload]) -> Vec<&str> {
        p.iter().map(|p| p.as_text().unwrap()).collect()
    }

    #[test]
    fn window_two_concat() {
        let out = run_in_order(&concat_pipeline(ConcatConfig::windowed(2)), &text_inputs(&["a", "c"]));
        assert_eq!(texts(&out), ["a", "ac"]);
    }

    #[test]
    fn unbounded_concat_keeps_everything() {
        let g = concat_pipeline(ConcatConfig::unbounded());
        let out = run_in_order(&g, &text_inputs(&["a", "b", "c"]));
        assert_eq!(texts(&out), ["a", "ab", "abc"]);
    }

    #[test]
    fn window_one_is_identity() {
        let g = concat_pipeline(ConcatConfig::windowed(1));
        let out = run_in_order(&g, &text_inputs(&["x", "y", "z"]));
        assert_eq!(texts(&out), ["x", "y", "z"]);
        assert_eq!(ConcatConfig::windowed(0), ConcatConfig::windowed(1));
    }

    #[test]
    fn concat_is_order_sensitive_and_uppercase_is_not() {
        assert!(concat_pipeline(ConcatConfig::default()).has_non_commutative());
        assert!(inverted_index_pipeline().has_non_commutative());
        assert!(!uppercase_pipeline().has_non_commutative());
        let op = concat_pipeline(ConcatConfig::unbounded()).op("concat").unwrap().clone();
        let run = |a: &str, b: &str| {
            let (s, _) = apply_operation(&op, None, &text_inputs(&[a])[0]).unwrap();
            let (_, d) = apply_operation(&op, s.as_ref(), &text_inputs(&[b])[0]).unwrap();
            d[0].payload.clone()
        };
        assert_ne!(run("a", "b"), run("b", "a"));
    }

    #[test]
    fn index_change_records_for_a_tiny_corpus() {
        let g = inverted_index_pipeline();
        let docs = inputs_from_payloads([
            Payload::Document {
                doc_id: 1,
                text: "hello world".into(),
            },
            Payload::Document {
                doc_id: 2,
                text: "hello".into(),
            },
            Payload::Document {
                doc_id: 3,
                text: String::new(),
            },
        ]);
        let out = run_in_order(&g, &docs);
        let summary: Vec<(String, u64, Vec<(i64, Vec<u32>)>)> = out
            .iter()
            .map(|p| match p {
                Payload::IndexChange {
                    word,
                    ordinal,
                    postings,
                } => (
                    word.clone(),
                    *ordinal,
                    postings.iter().map(|w| (w.doc_id, w.positions.clone())).collect(),
                ),
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(
            summary,
            vec![
                ("hello".into(), 1, vec![(1, vec![0])]),
                ("world".into(), 1, vec![(1, vec![1])]),
                ("hello".into(), 2, vec![(1, vec![0]), (2, vec![0])]),
            ]
        );
        assert_eq!(materialize_index(&out).unwrap(), batch_index_oracle(&docs));
    }

    #[test]
    fn streamed_index_matches_batch_index() {
        let docs = generate_corpus(&CorpusSpec {
            seed: 3,
            documents: 30,
            ..CorpusSpec::default()
        });
        let out = run_in_order(&inverted_index_pipeline(), &docs);
        assert_eq!(materialize_index(&out).unwrap(), batch_index_oracle(&docs));
    }

    #[test]
    fn letters_cycle() {
        let ins = letter_inputs(28);
        assert_eq!(ins[0].payload, Payload::text("a"));
        assert_eq!(ins[25].payload, Payload::text("z"));
        assert_eq!(ins[26].payload, Payload::text("a"));
        assert_eq!(ins[27].seq(), 28);
    }

    #[test]
    fn pipeline_names_round_trip() {
        for k in [PipelineKind::Concat, PipelineKind::Index, PipelineKind::Uppercase] {
            assert_eq!(k.name().parse::<PipelineKind>().unwrap(), k);
        }
        assert!("wordcount".parse::<PipelineKind>().is_err());
    }
}
