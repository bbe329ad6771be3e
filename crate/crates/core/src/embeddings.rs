//! Word vectors, mean sentence vectors and cosine similarity.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Word → vector table read from the common textual embedding format.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl WordVectorTable {
    pub fn new(dimension: usize, vectors: HashMap<String, Vec<f32>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::HeaderMismatch("dimension must be positive".into()));
        }
        if vectors.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if let Some(v) = vectors.values().find(|v| v.len() != dimension) {
            return Err(Error::DimensionMismatch {
                line: 0,
                expected: dimension,
                found: v.len(),
            });
        }
        Ok(Self { dimension, vectors })
    }

    /// Parses `"vocab_size dimension"` followed by one `word f1 … fd` line per
    /// entry. Words are lowercased; a later duplicate replaces an earlier one.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut lines = contents.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::EmptyVocabulary)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (vocab_size, dimension) = match fields.as_slice() {
            [v, d] => match (parse_usize(v), parse_usize(d)) {
                (Some(v), Some(d)) if d > 0 => (v, d),
                _ => return Err(Error::HeaderMismatch(format!("bad header {header:?}"))),
            },
            _ => return Err(Error::HeaderMismatch(format!("bad header {header:?}"))),
        };

        let mut vectors = HashMap::with_capacity(vocab_size);
        let mut rows = 0;
        for (idx, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default().to_lowercase();
            let values = parts
                .map(|p| p.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    what: "word vectors".into(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if values.len() != dimension {
                return Err(Error::DimensionMismatch {
                    line: idx + 1,
                    expected: dimension,
                    found: values.len(),
                });
            }
            vectors.insert(word, values);
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::EmptyVocabulary);
        }
        if rows != vocab_size {
            return Err(Error::HeaderMismatch(format!(
                "header announces {vocab_size} words, file has {rows}"
            )));
        }
        Ok(Self { dimension, vectors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&contents)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lookup(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    /// How many lemmas were found in the table.
    pub token_count: usize,
}

impl SentenceVector {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            values: vec![0.0; dimension],
            token_count: 0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            token_count: self.token_count,
        }
    }
}

/// Mean of the vectors of in-vocabulary lemmas; out-of-vocabulary lemmas are
/// skipped. All-OOV input gives the zero vector.
pub fn sentence_vector<S: AsRef<str>>(lemmas: &[S], table: &WordVectorTable) -> SentenceVector {
    let mut acc = SentenceVector::zeros(table.dimension());
    for lemma in lemmas {
        if let Some(v) = table.lookup(lemma.as_ref()) {
            for (a, x) in acc.values.iter_mut().zip(v) {
                *a += f64::from(*x);
            }
            acc.token_count += 1;
        }
    }
    if acc.token_count > 0 {
        let n = acc.token_count as f64;
        acc.values.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

/// `a·b / (|a||b|)`, or 0 when either vector has zero norm.
pub fn cosine(a: &SentenceVector, b: &SentenceVector) -> Result<f64> {
    cosine_slices(&a.values, &b.values)
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            line: 0,
            expected: a.len(),
            found: b.len(),
        });
    }
    // Accumulate all three sums in one pass, in index order, so that swapping
    // the arguments yields the same floating-point result.
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let denom = na.sqrt() * nb.sqrt();
    Ok((dot / denom).clamp(-1.0, 1.0))
}
