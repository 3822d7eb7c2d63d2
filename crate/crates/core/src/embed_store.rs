//! Precomputed embedding stores and a deterministic synthetic fallback.
//!
//! Three file formats are read:
//!
//! * word vectors, word2vec text format: a `<count> <dim>` header followed
//!   by `<token> <v1> ... <vdim>` lines;
//! * sentence vectors, JSON lines `{"id": str, "vec": [f32]}`;
//! * contextual (subword) vectors, JSON lines
//!   `{"id": str, "tokens": [str], "word_index": [usize], "vecs": [[f32]]}`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorStore {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
    zero: Vec<f32>,
}

impl WordVectorStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("word vector dimension must be positive"));
        }
        Ok(WordVectorStore {
            dim,
            table: HashMap::new(),
            zero: vec![0.0; dim],
        })
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::invalid(format!(
                "vector for {token:?} has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.table.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.table.contains_key(token)
    }

    /// Missing tokens map to the zero vector.
    pub fn lookup(&self, token: &str) -> &[f32] {
        self.table.get(token).map(Vec::as_slice).unwrap_or(&self.zero)
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let err = |line: usize, msg: String| Error::Format {
            what: "word vectors",
            line,
            msg,
        };
        let (count, dim) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(err(1, "missing `<count> <dim>` header".into()));
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [c, d] => c.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
                _ => None,
            };
            match parsed {
                Some((c, d)) if d > 0 => break (c, d),
                _ => return Err(err(i + 1, format!("bad header {line:?}"))),
            }
        };
        let mut store = WordVectorStore::new(dim)?;
        for (i, line) in lines {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let token = fields.next().expect("non-empty line");
            let values = fields
                .map(|f| f.parse::<f32>())
                .collect::<std::result::Result<Vec<f32>, _>>()
                .map_err(|e| err(i + 1, format!("bad float: {e}")))?;
            if values.len() != dim {
                return Err(err(
                    i + 1,
                    format!("expected {dim} values for {token:?}, found {}", values.len()),
                ));
            }
            if store.table.insert(token.to_string(), values).is_some() {
                return Err(err(i + 1, format!("duplicate token {token:?}")));
            }
        }
        if store.len() != count {
            return Err(Error::Format {
                what: "word vectors",
                line: 1,
                msg: format!("header announces {count} vectors, found {}", store.len()),
            });
        }
        Ok(store)
    }

    /// Writes the text format with tokens in sorted order.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        let mut tokens: Vec<&String> = self.table.keys().collect();
        tokens.sort();
        for token in tokens {
            write!(out, "{token}")?;
            for v in &self.table[token] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct SentenceRecord {
    id: String,
    vec: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SentenceVectorStore {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
}

impl SentenceVectorStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.table.get(id).map(Vec::as_slice)
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut store = SentenceVectorStore::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Format {
                what: "sentence vectors",
                line: i + 1,
                msg,
            };
            let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            if rec.vec.is_empty() {
                return Err(err(format!("empty vector for {:?}", rec.id)));
            }
            if store.table.is_empty() {
                store.dim = rec.vec.len();
            } else if rec.vec.len() != store.dim {
                return Err(err(format!(
                    "ragged vector for {:?}: length {}, expected {}",
                    rec.id,
                    rec.vec.len(),
                    store.dim
                )));
            }
            if store.table.contains_key(&rec.id) {
                return Err(err(format!("duplicate id {:?}", rec.id)));
            }
            store.table.insert(rec.id, rec.vec);
        }
        Ok(store)
    }
}

/// Subword-level vectors of one tweet with their word alignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextualEntry {
    pub tokens: Vec<String>,
    pub word_index: Vec<usize>,
    pub vecs: Vec<Vec<f32>>,
}

impl ContextualEntry {
    /// Vectors of the subwords aligned to word `position`.
    pub fn vectors_for_word(&self, position: usize) -> impl Iterator<Item = &[f32]> {
        self.word_index
            .iter()
            .zip(&self.vecs)
            .filter(move |(&w, _)| w == position)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Deserialize)]
struct ContextualRecord {
    id: String,
    tokens: Vec<String>,
    word_index: Vec<usize>,
    vecs: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContextualVectorStore {
    dim: usize,
    table: HashMap<String, ContextualEntry>,
}

impl ContextualVectorStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ContextualEntry> {
        self.table.get(id)
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut store = ContextualVectorStore::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Format {
                what: "contextual vectors",
                line: i + 1,
                msg,
            };
            let rec: ContextualRecord =
                serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            if rec.tokens.len() != rec.word_index.len() || rec.tokens.len() != rec.vecs.len() {
                return Err(err(format!(
                    "{:?}: tokens/word_index/vecs lengths differ ({}/{}/{})",
                    rec.id,
                    rec.tokens.len(),
                    rec.word_index.len(),
                    rec.vecs.len()
                )));
            }
            if rec.word_index.windows(2).any(|w| w[0] > w[1]) {
                return Err(err(format!("{:?}: word_index must be non-decreasing", rec.id)));
            }
            for v in &rec.vecs {
                if v.is_empty() {
                    return Err(err(format!("{:?}: empty vector", rec.id)));
                }
                if store.dim == 0 {
                    store.dim = v.len();
                } else if v.len() != store.dim {
                    return Err(err(format!(
                        "{:?}: ragged vector of length {}, expected {}",
                        rec.id,
                        v.len(),
                        store.dim
                    )));
                }
            }
            if store.table.contains_key(&rec.id) {
                return Err(err(format!("duplicate id {:?}", rec.id)));
            }
            store.table.insert(
                rec.id,
                ContextualEntry {
                    tokens: rec.tokens,
                    word_index: rec.word_index,
                    vecs: rec.vecs,
                },
            );
        }
        Ok(store)
    }
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
fn fnv1a(bytes: &[u8], state: u64) -> u64 {
    bytes.iter().fold(state, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic unit-norm pseudo-random vector keyed by `(key, seed)`.
pub fn synth_vector(key: &str, dim: usize, seed: u64) -> Vec<f32> {
    assert!(dim > 0, "synth_vector needs dim > 0");
    let h = fnv1a(&seed.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    let h = fnv1a(key.as_bytes(), h);
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        return v;
    }
    raw.iter().map(|x| (x / norm) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn word_vectors_load_and_oov() {
        let store = WordVectorStore::load("2 3\ncat 1 2 3\ndog 0.5 -1 2e-3\n".as_bytes()).unwrap();
        assert_eq!(store.dim(), 3);
        assert_eq!(store.len(), 2);
        assert_eq!(store.lookup("dog"), [0.5, -1.0, 0.002]);
        assert_eq!(store.lookup("bird"), [0.0; 3]);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn word_vector_errors() {
        let e = WordVectorStore::load("2 3\ncat 1 2\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(WordVectorStore::load("3 3\ncat 1 2 3\n".as_bytes()).is_err());
        assert!(WordVectorStore::load("".as_bytes()).is_err());
        assert!(WordVectorStore::load("x 3\n".as_bytes()).is_err());
    }

    #[test]
    fn sentence_vectors() {
        let zeros = vec!["0"; 512].join(",");
        let line = format!("{{\"id\":\"t1\",\"vec\":[{zeros}]}}\n");
        let store = SentenceVectorStore::load(line.as_bytes()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.dim(), 512);

        let dup = format!("{line}{line}");
        assert!(SentenceVectorStore::load(dup.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("duplicate"));

        let ragged = "{\"id\":\"a\",\"vec\":[1,2]}\n{\"id\":\"b\",\"vec\":[1]}\n";
        assert!(SentenceVectorStore::load(ragged.as_bytes()).is_err());
        assert!(SentenceVectorStore::load("{\"id\":\"a\"}\n".as_bytes()).is_err());
    }

    #[test]
    fn contextual_vectors() {
        let ok = r###"{"id":"t1","tokens":["get","ou","##t"],"word_index":[0,1,1],"vecs":[[1,0],[0,1],[1,1]]}"###;
        let store = ContextualVectorStore::load(ok.as_bytes()).unwrap();
        assert_eq!(store.dim(), 2);
        assert_eq!(store.get("t1").unwrap().vectors_for_word(1).count(), 2);

        let bad = r#"{"id":"t1","tokens":["a","b"],"word_index":[0,1],"vecs":[[1,0]]}"#;
        assert!(ContextualVectorStore::load(bad.as_bytes()).is_err());
        let unordered = r#"{"id":"t1","tokens":["a","b"],"word_index":[1,0],"vecs":[[1],[0]]}"#;
        assert!(ContextualVectorStore::load(unordered.as_bytes()).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_unit_norm() {
        let a = synth_vector("cat", 8, 7);
        assert_eq!(a, synth_vector("cat", 8, 7));
        let norm: f64 = a.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_ne!(a, synth_vector("cat", 8, 8));
    }

    #[test]
    fn synth_seeds_do_not_collide() {
        let collisions = (0..1000)
            .filter(|i| {
                let key = format!("w{i}");
                synth_vector(&key, 8, 7) == synth_vector(&key, 8, 8)
            })
            .count();
        assert_eq!(collisions, 0);
    }

    proptest! {
        #[test]
        fn text_format_round_trip(
            vectors in proptest::collection::btree_map("[a-z]{1,8}", proptest::collection::vec(-1e6f32..1e6, 4), 0..20)
        ) {
            let mut store = WordVectorStore::new(4).unwrap();
            for (k, v) in &vectors {
                store.insert(k, v.clone()).unwrap();
            }
            let mut buf = Vec::new();
            store.write(&mut buf).unwrap();
            let back = WordVectorStore::load(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), vectors.len());
            for (k, v) in &vectors {
                let got = back.lookup(k);
                for (a, b) in got.iter().zip(v) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
