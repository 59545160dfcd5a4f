//! Opcode n-grams, vocabularies and per-application feature vectors.

mod external;
mod vocab;

pub use external::{ExternalVocab, ExternalVocabBuilder, GramStats, SpillConfig};
pub use vocab::{build_vocabulary, merge_vocab, VocabEntry, Vocabulary};

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hex;
use crate::ingest::{AppRecord, OpcodeSeq};

/// A contiguous run of `n` opcodes from one method.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NGram(Box<[u8]>);

impl NGram {
    pub fn new(bytes: impl Into<Box<[u8]>>) -> Self {
        NGram(bytes.into())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, &'static str> {
        let bytes = hex::decode(s)?;
        if bytes.is_empty() {
            return Err("empty gram");
        }
        Ok(NGram(bytes.into()))
    }
}

impl Borrow<[u8]> for NGram {
    fn borrow(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for NGram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for NGram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        NGram::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Windows of length `n` over one method. Never crosses method boundaries.
pub fn windows(seq: &OpcodeSeq, n: usize) -> impl Iterator<Item = &[u8]> {
    assert!(n >= 1, "n-gram length must be at least 1");
    seq.opcodes.windows(n)
}

/// The multiset of n-grams in one method: `max(0, m - n + 1)` grams in total.
pub fn extract_ngrams(seq: &OpcodeSeq, n: usize) -> BTreeMap<NGram, u32> {
    let mut out: BTreeMap<NGram, u32> = BTreeMap::new();
    for w in windows(seq, n) {
        match out.get_mut(w) {
            Some(c) => *c += 1,
            None => {
                out.insert(NGram::new(w), 1);
            }
        }
    }
    out
}

/// Gram multiplicities over all methods of an app, borrowed from the record.
pub fn app_gram_counts(app: &AppRecord, n: usize) -> HashMap<&[u8], u32> {
    let mut counts: HashMap<&[u8], u32> = HashMap::new();
    for m in &app.methods {
        for w in windows(m, n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Binary,
    Frequency,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Binary => "binary",
            FeatureMode::Frequency => "frequency",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(FeatureMode::Binary),
            "frequency" => Ok(FeatureMode::Frequency),
            other => Err(Error::InvalidArgument(format!("unknown feature mode `{other}`"))),
        }
    }
}

/// Sorted `(feature_index, value)` pairs with no stored zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseVector {
    pairs: Vec<(u32, u32)>,
    mode: FeatureMode,
}

impl SparseVector {
    pub fn empty(mode: FeatureMode) -> Self {
        SparseVector {
            pairs: Vec::new(),
            mode,
        }
    }

    /// Builds a vector from pairs, sorting them and dropping zeros. Binary
    /// mode clamps every stored value to 1. Fails on repeated indices.
    pub fn from_pairs(mut pairs: Vec<(u32, u32)>, mode: FeatureMode) -> Result<Self> {
        pairs.retain(|&(_, v)| v != 0);
        pairs.sort_unstable_by_key(|&(i, _)| i);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!("repeated feature index {}", w[0].0)));
        }
        if mode == FeatureMode::Binary {
            for p in &mut pairs {
                p.1 = 1;
            }
        }
        Ok(SparseVector { pairs, mode })
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    pub fn get(&self, index: u32) -> u32 {
        match self.pairs.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.pairs[pos].1,
            Err(_) => 0,
        }
    }

    pub fn max_index(&self) -> Option<u32> {
        self.pairs.last().map(|&(i, _)| i)
    }

    /// Indicator vector of the stored entries.
    pub fn to_binary(&self) -> SparseVector {
        SparseVector {
            pairs: self.pairs.iter().map(|&(i, _)| (i, 1)).collect(),
            mode: FeatureMode::Binary,
        }
    }

    /// Keeps entries whose index maps to `Some(new_index)`. The map must be
    /// monotone so the output stays sorted.
    pub(crate) fn remap(&self, map: impl Fn(u32) -> Option<u32>) -> SparseVector {
        SparseVector {
            pairs: self
                .pairs
                .iter()
                .filter_map(|&(i, v)| map(i).map(|j| (j, v)))
                .collect(),
            mode: self.mode,
        }
    }
}

/// Projects an app onto `vocab`. Grams outside the vocabulary are dropped.
pub fn featurize(app: &AppRecord, vocab: &Vocabulary, n: usize, mode: FeatureMode) -> Result<SparseVector> {
    if vocab.n() != n {
        return Err(Error::MixedN {
            left: vocab.n(),
            right: n,
        });
    }
    let mut pairs: Vec<(u32, u32)> = app_gram_counts(app, n)
        .into_iter()
        .filter_map(|(g, c)| vocab.index_of(g).map(|i| (i as u32, c)))
        .collect();
    pairs.sort_unstable_by_key(|&(i, _)| i);
    if mode == FeatureMode::Binary {
        for p in &mut pairs {
            p.1 = 1;
        }
    }
    Ok(SparseVector { pairs, mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ops: &[u8]) -> OpcodeSeq {
        OpcodeSeq::new("LA;", "f()V", ops.to_vec())
    }

    #[test]
    fn window_counts_for_seven_instructions() {
        let s = seq(&[1, 2, 3, 4, 5, 6, 7]);
        let total = |n| extract_ngrams(&s, n).values().sum::<u32>();
        assert_eq!(total(2), 6);
        assert_eq!(total(3), 5);
        assert_eq!(total(4), 4);
    }

    #[test]
    fn single_trigram() {
        let grams = extract_ngrams(&seq(&[0x08, 0x54, 0x6e]), 3);
        assert_eq!(grams.len(), 1);
        let (g, c) = grams.iter().next().unwrap();
        assert_eq!(g.to_hex(), "08546e");
        assert_eq!(*c, 1);
    }

    #[test]
    fn short_method_yields_nothing() {
        assert!(extract_ngrams(&seq(&[0x08, 0x54]), 3).is_empty());
        assert!(extract_ngrams(&seq(&[]), 1).is_empty());
    }

    #[test]
    fn featurize_modes_and_projection() {
        let app = AppRecord::new("a", vec![seq(&[0x6e, 0x6e])]).unwrap();
        let vocab = build_vocabulary(std::slice::from_ref(&app), 1);
        let idx = vocab.index_of(&[0x6e]).unwrap() as u32;
        let f = featurize(&app, &vocab, 1, FeatureMode::Frequency).unwrap();
        assert_eq!(f.pairs(), &[(idx, 2)]);
        let b = featurize(&app, &vocab, 1, FeatureMode::Binary).unwrap();
        assert_eq!(b.pairs(), &[(idx, 1)]);
        assert_eq!(b, f.to_binary());

        let other = AppRecord::new("b", vec![seq(&[0x0e])]).unwrap();
        assert_eq!(featurize(&other, &vocab, 1, FeatureMode::Frequency).unwrap().nnz(), 0);
        assert!(matches!(
            featurize(&other, &vocab, 2, FeatureMode::Binary),
            Err(Error::MixedN { .. })
        ));
    }

    #[test]
    fn sparse_vector_from_pairs() {
        let v = SparseVector::from_pairs(vec![(3, 2), (1, 0), (0, 5)], FeatureMode::Frequency).unwrap();
        assert_eq!(v.pairs(), &[(0, 5), (3, 2)]);
        assert_eq!(v.get(3), 2);
        assert_eq!(v.get(1), 0);
        assert!(SparseVector::from_pairs(vec![(1, 1), (1, 2)], FeatureMode::Binary).is_err());
        let b = SparseVector::from_pairs(vec![(2, 7)], FeatureMode::Binary).unwrap();
        assert_eq!(b.pairs(), &[(2, 1)]);
    }

    #[test]
    fn gram_hex_round_trip() {
        let g = NGram::from_hex("08546e").unwrap();
        assert_eq!(g.bytes(), &[0x08, 0x54, 0x6e]);
        assert_eq!(g.to_string(), "08546e");
        assert!(NGram::from_hex("").is_err());
    }
}
