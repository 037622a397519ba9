use std::collections::BTreeMap;

use crate::model::{tokenize, Element, Payload, WordPosting};

/// Word to posting list, postings in document order.
pub type MaterializedIndex = BTreeMap<String, Vec<WordPosting>>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexReplayError {
    #[error("record {index} is not an index change")]
    NotAChange { index: usize },
    #[error("word {word:?} jumped from ordinal {have} to {got}")]
    Gap { word: String, have: u64, got: u64 },
    #[error("word {word:?} has two different records with ordinal {ordinal}")]
    Conflict { word: String, ordinal: u64 },
}

/// Applies change records in delivery order. A record whose ordinal was
/// already applied must agree with what is known; one that skips an
/// ordinal is an error.
pub fn materialize_index<'a>(
    records: impl IntoIterator<Item = &'a Payload>,
) -> Result<MaterializedIndex, IndexReplayError> {
    let mut index = MaterializedIndex::new();
    for (i, rec) in records.into_iter().enumerate() {
        let Payload::IndexChange {
            word,
            ordinal,
            postings,
        } = rec
        else {
            return Err(IndexReplayError::NotAChange { index: i });
        };
        let known = index.entry(word.clone()).or_default();
        let have = known.len() as u64;
        let consistent = postings.len() as u64 == *ordinal
            && known.iter().zip(postings.iter()).all(|(a, b)| a == b);
        if !consistent {
            return Err(IndexReplayError::Conflict {
                word: word.clone(),
                ordinal: *ordinal,
            });
        }
        if *ordinal > have + 1 {
            return Err(IndexReplayError::Gap {
                word: word.clone(),
                have,
                got: *ordinal,
            });
        }
        if *ordinal == have + 1 {
            known.clone_from(postings);
        }
    }
    index.retain(|_, v| !v.is_empty());
    Ok(index)
}

/// Folds the documents in sequence order straight into an index.
pub fn batch_index_oracle(corpus: &[Element]) -> MaterializedIndex {
    let mut docs: Vec<&Element> = corpus.iter().collect();
    docs.sort_by_key(|e| e.seq());
    let mut index = MaterializedIndex::new();
    for e in docs {
        if let Payload::Document { doc_id, text } = &e.payload {
            for p in tokenize(*doc_id, text) {
                index.entry(p.word.clone()).or_default().push(p);
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::inputs_from_payloads;

    fn posting(word: &str, doc_id: i64, positions: &[u32]) -> WordPosting {
        WordPosting {
            word: word.into(),
            doc_id,
            positions: positions.to_vec(),
        }
    }

    fn change(word: &str, postings: Vec<WordPosting>) -> Payload {
        Payload::IndexChange {
            word: word.into(),
            ordinal: postings.len() as u64,
            postings,
        }
    }

    #[test]
    fn batch_index_of_two_documents() {
        let docs = inputs_from_payloads([
            Payload::Document {
                doc_id: 1,
                text: "hello world".into(),
            },
            Payload::Document {
                doc_id: 2,
                text: "hello".into(),
            },
        ]);
        let idx = batch_index_oracle(&docs);
        assert_eq!(idx["hello"], vec![posting("hello", 1, &[0]), posting("hello", 2, &[0])]);
        assert_eq!(idx["world"], vec![posting("world", 1, &[1])]);
        assert_eq!(idx.len(), 2);
        assert!(batch_index_oracle(&[]).is_empty());
    }

    #[test]
    fn duplicates_are_idempotent() {
        let one = change("a", vec![posting("a", 1, &[0])]);
        let two = change("a", vec![posting("a", 1, &[0]), posting("a", 2, &[3])]);
        let idx = materialize_index([&one, &two, &one, &two]).unwrap();
        assert_eq!(idx["a"].len(), 2);
    }

    #[test]
    fn gaps_and_conflicts_are_detected() {
        let two = change("a", vec![posting("a", 1, &[0]), posting("a", 2, &[3])]);
        assert!(matches!(materialize_index([&two]), Err(IndexReplayError::Gap { .. })));
        let one = change("a", vec![posting("a", 1, &[0])]);
        let other = change("a", vec![posting("a", 2, &[0])]);
        assert!(matches!(
            materialize_index([&one, &other]),
            Err(IndexReplayError::Conflict { .. })
        ));
        assert!(matches!(
            materialize_index([&Payload::text("x")]),
            Err(IndexReplayError::NotAChange { index: 0 })
        ));
    }
}
