use std::fmt;

use serde::{Deserialize, Serialize};

/// One position-annotated occurrence list of a word in a document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WordPosting {
    pub word: String,
    pub doc_id: i64,
    pub positions: Vec<u32>,
}

/// Data carried by an element. The union is closed so that payloads can be
/// hashed and compared bit-exactly.
///
/// `List` is used for operation states that hold several payloads (the
/// concatenation window).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Text(String),
    Integer(i64),
    Document {
        doc_id: i64,
        text: String,
    },
    WordPosting(WordPosting),
    IndexChange {
        word: String,
        ordinal: u64,
        postings: Vec<WordPosting>,
    },
    List(Vec<Payload>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("positions of `{word}` in doc {doc_id} are not strictly increasing")]
    UnorderedPositions { word: String, doc_id: i64 },
    #[error("index change for `{0}` has ordinal 0")]
    ZeroOrdinal(String),
}

impl Payload {
    pub fn text(s: impl Into<String>) -> Self {
        Payload::Text(s.into())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Payload::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Checks the structural invariants of the payload and everything nested in it.
    pub fn validate(&self) -> Result<(), PayloadError> {
        match self {
            Payload::WordPosting(p) => p.validate(),
            Payload::IndexChange {
                word,
                ordinal,
                postings,
            } => {
                if *ordinal == 0 {
                    return Err(PayloadError::ZeroOrdinal(word.clone()));
                }
                postings.iter().try_for_each(WordPosting::validate)
            }
            Payload::List(items) => items.iter().try_for_each(Payload::validate),
            _ => Ok(()),
        }
    }

    /// Canonical JSON: object keys sorted lexicographically, no whitespace.
    pub fn canonical_json(&self) -> String {
        canonical_json(self)
    }

    /// Name of the variant, used to check that a state has the expected shape.
    pub fn shape(&self) -> &'static str {
        match self {
            Payload::Text(_) => "text",
            Payload::Integer(_) => "integer",
            Payload::Document { .. } => "document",
            Payload::WordPosting(_) => "word_posting",
            Payload::IndexChange { .. } => "index_change",
            Payload::List(_) => "list",
        }
    }
}

impl WordPosting {
    pub fn validate(&self) -> Result<(), PayloadError> {
        if self.positions.windows(2).all(|w| w[0] < w[1]) {
            Ok(())
        } else {
            Err(PayloadError::UnorderedPositions {
                word: self.word.clone(),
                doc_id: self.doc_id,
            })
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Text(s) => write!(f, "{s}"),
            Payload::Integer(i) => write!(f, "{i}"),
            Payload::Document { doc_id, .. } => write!(f, "doc{doc_id}"),
            Payload::WordPosting(p) => write!(f, "{}@doc{}", p.word, p.doc_id),
            Payload::IndexChange { word, ordinal, .. } => write!(f, "{word}#{ordinal}"),
            Payload::List(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Serializes any value to JSON with object keys in lexicographic order.
///
/// `serde_json::Value` keeps objects in a `BTreeMap` unless the
/// `preserve_order` feature is on, which this crate never enables.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("payloads always serialize");
    serde_json::to_string(&v).expect("values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_fields() {
        let p = Payload::Document {
            text: "hello".into(),
            doc_id: 1,
        };
        assert_eq!(
            p.canonical_json(),
            r#"{"document":{"doc_id":1,"text":"hello"}}"#
        );
        let wp = Payload::WordPosting(WordPosting {
            word: "w".into(),
            doc_id: 2,
            positions: vec![0, 3],
        });
        assert_eq!(
            wp.canonical_json(),
            r#"{"word_posting":{"doc_id":2,"positions":[0,3],"word":"w"}}"#
        );
    }

    #[test]
    fn positions_must_increase() {
        let bad = Payload::WordPosting(WordPosting {
            word: "w".into(),
            doc_id: 2,
            positions: vec![3, 3],
        });
        assert!(bad.validate().is_err());
        let zero = Payload::IndexChange {
            word: "w".into(),
            ordinal: 0,
            postings: vec![],
        };
        assert_eq!(zero.validate(), Err(PayloadError::ZeroOrdinal("w".into())));
    }

    #[test]
    fn round_trips_through_json() {
        let p = Payload::List(vec![Payload::text("a"), Payload::Integer(-4)]);
        let s = p.canonical_json();
        let back: Payload = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
