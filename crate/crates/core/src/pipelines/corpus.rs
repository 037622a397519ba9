use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::model::{inputs_from_payloads, Element, Payload};

/// Synthetic text whose word frequencies follow Zipf's law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub documents: usize,
    pub vocabulary: usize,
    pub exponent: f64,
    /// Inclusive bounds on words per document.
    pub words_per_doc: (usize, usize),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 0,
            documents: 50,
            vocabulary: 500,
            exponent: 1.0,
            words_per_doc: (5, 20),
        }
    }
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: i64,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// The word of a given frequency rank (1 is the most frequent).
fn word(rank: usize) -> String {
    format!("w{rank}")
}

fn sampler(spec: &CorpusSpec) -> Zipf<f64> {
    let exponent = if spec.exponent > 0.0 { spec.exponent } else { 1.0 };
    Zipf::new(spec.vocabulary.max(1) as u64, exponent).expect("positive vocabulary and exponent")
}

/// Documents with ids and sequences 1..=n. Same spec, same corpus.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<Element> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let zipf = sampler(spec);
    let (lo, hi) = spec.words_per_doc;
    let (lo, hi) = (lo.max(1), hi.max(lo.max(1)));
    let payloads = (1..=spec.documents).map(|id| {
        let len = rng.gen_range(lo..=hi);
        let words: Vec<String> = (0..len).map(|_| word(zipf.sample(&mut rng) as usize)).collect();
        Payload::Document {
            doc_id: id as i64,
            text: words.join(" "),
        }
    });
    inputs_from_payloads(payloads)
}

/// Writes the documents among `inputs` as JSON lines.
pub fn write_corpus(path: &Path, inputs: &[Element]) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in inputs {
        if let Payload::Document { doc_id, text } = &e.payload {
            let doc = Document {
                doc_id: *doc_id,
                text: text.clone(),
            };
            serde_json::to_writer(&mut out, &doc).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-lines corpus; blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<Element>, CorpusError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut payloads = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse { line: i + 1, source })?;
        payloads.push(Payload::Document {
            doc_id: doc.doc_id,
            text: doc.text,
        });
    }
    Ok(inputs_from_payloads(payloads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let spec = CorpusSpec {
            seed: 11,
            documents: 10,
            ..CorpusSpec::default()
        };
        let a = generate_corpus(&spec);
        assert_eq!(a, generate_corpus(&spec));
        assert_eq!(a.len(), 10);
        assert_eq!(a[9].seq(), 10);
        let other = generate_corpus(&CorpusSpec { seed: 12, ..spec });
        assert_ne!(a, other);
    }

    #[test]
    fn empty_corpus() {
        let spec = CorpusSpec {
            documents: 0,
            ..CorpusSpec::default()
        };
        assert!(generate_corpus(&spec).is_empty());
    }

    #[test]
    fn words_per_document_within_bounds() {
        let spec = CorpusSpec {
            seed: 5,
            documents: 40,
            words_per_doc: (3, 6),
            ..CorpusSpec::default()
        };
        for e in generate_corpus(&spec) {
            let Payload::Document { text, .. } = &e.payload else { panic!() };
            let n = text.split(' ').count();
            assert!((3..=6).contains(&n), "{n} words");
        }
    }

    #[test]
    fn rank_frequencies_follow_zipf() {
        let spec = CorpusSpec {
            seed: 1,
            vocabulary: 100,
            exponent: 1.0,
            ..CorpusSpec::default()
        };
        let zipf = sampler(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut counts = [0usize; 101];
        for _ in 0..10_000 {
            counts[zipf.sample(&mut rng) as usize] += 1;
        }
        let ratio = counts[1] as f64 / counts[10] as f64;
        assert!((7.0..=13.0).contains(&ratio), "rank 1 / rank 10 = {ratio}");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let docs = generate_corpus(&CorpusSpec {
            seed: 2,
            documents: 7,
            ..CorpusSpec::default()
        });
        write_corpus(&path, &docs).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), docs);
        std::fs::write(&path, "{\"doc_id\": 1}\n").unwrap();
        assert!(matches!(read_corpus(&path), Err(CorpusError::Parse { line: 1, .. })));
    }
}
