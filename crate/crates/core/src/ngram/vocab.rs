use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::{app_gram_counts, NGram};
use crate::error::{Error, Result};
use crate::ingest::AppRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabEntry {
    pub feature_index: usize,
    pub doc_freq: u64,
    pub total_freq: u64,
}

/// Every distinct n-gram of a corpus, indexed in ascending gram order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    n: usize,
    grams: Vec<NGram>,
    doc_freq: Vec<u64>,
    total_freq: Vec<u64>,
}

impl Vocabulary {
    pub fn empty(n: usize) -> Self {
        Vocabulary {
            n,
            grams: Vec::new(),
            doc_freq: Vec::new(),
            total_freq: Vec::new(),
        }
    }

    /// Builds from unordered `(gram, doc_freq, total_freq)` triples with
    /// distinct grams.
    pub fn from_entries(n: usize, mut entries: Vec<(NGram, u64, u64)>) -> Result<Self> {
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut v = Vocabulary::empty(n);
        v.grams.reserve(entries.len());
        for (g, df, tf) in entries {
            if g.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "gram {g} has length {} in a vocabulary with n={n}",
                    g.len()
                )));
            }
            if v.grams.last() == Some(&g) {
                return Err(Error::InvalidArgument(format!("repeated gram {g}")));
            }
            v.grams.push(g);
            v.doc_freq.push(df);
            v.total_freq.push(tf);
        }
        Ok(v)
    }

    fn from_map(n: usize, map: HashMap<NGram, (u64, u64)>) -> Self {
        let entries = map.into_iter().map(|(g, (df, tf))| (g, df, tf)).collect();
        Vocabulary::from_entries(n, entries).expect("map keys are distinct grams of length n")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn index_of(&self, gram: &[u8]) -> Option<usize> {
        self.grams.binary_search_by(|g| g.bytes().cmp(gram)).ok()
    }

    pub fn get(&self, gram: &[u8]) -> Option<VocabEntry> {
        self.index_of(gram).map(|i| self.entry(i))
    }

    pub fn entry(&self, index: usize) -> VocabEntry {
        VocabEntry {
            feature_index: index,
            doc_freq: self.doc_freq[index],
            total_freq: self.total_freq[index],
        }
    }

    pub fn gram(&self, index: usize) -> &NGram {
        &self.grams[index]
    }

    pub fn grams(&self) -> &[NGram] {
        &self.grams
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, VocabEntry)> + '_ {
        self.grams.iter().enumerate().map(|(i, g)| (g, self.entry(i)))
    }

    /// Keeps the given indices (ascending, distinct) and reindexes them.
    pub(crate) fn restrict(&self, keep: &[usize]) -> Vocabulary {
        Vocabulary {
            n: self.n,
            grams: keep.iter().map(|&i| self.grams[i].clone()).collect(),
            doc_freq: keep.iter().map(|&i| self.doc_freq[i]).collect(),
            total_freq: keep.iter().map(|&i| self.total_freq[i]).collect(),
        }
    }

    /// `hex<TAB>doc_freq<TAB>total_freq` per line, ascending gram order.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "# n={}", self.n)?;
        for (g, e) in self.iter() {
            writeln!(sink, "{}\t{}\t{}", g.to_hex(), e.doc_freq, e.total_freq)?;
        }
        sink.flush()
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<Vocabulary> {
        let mut n = None;
        let mut entries = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::format(line_no, e.to_string()))?;
            if let Some(meta) = line.strip_prefix("# n=") {
                n = Some(meta.trim().parse().map_err(|_| Error::format(line_no, "bad n"))?);
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [gram, df, tf] = parts.as_slice() else {
                return Err(Error::format(line_no, "expected gram, doc_freq, total_freq"));
            };
            let gram = NGram::from_hex(gram).map_err(|r| Error::format(line_no, r))?;
            let df = df.parse().map_err(|_| Error::format(line_no, "bad doc_freq"))?;
            let tf = tf.parse().map_err(|_| Error::format(line_no, "bad total_freq"))?;
            if let Some(prev) = entries.last().map(|e: &(NGram, u64, u64)| &e.0) {
                if prev >= &gram {
                    return Err(Error::format(line_no, "vocabulary not strictly sorted"));
                }
            }
            entries.push((gram, df, tf));
        }
        let n = n.or_else(|| entries.first().map(|e| e.0.len())).unwrap_or(1);
        Vocabulary::from_entries(n, entries).map_err(|e| Error::format(0, e.to_string()))
    }
}

fn build_sequential(apps: &[AppRecord], n: usize) -> Vocabulary {
    let mut map: HashMap<NGram, (u64, u64)> = HashMap::new();
    for app in apps {
        for (gram, count) in app_gram_counts(app, n) {
            match map.get_mut(gram) {
                Some(e) => {
                    e.0 += 1;
                    e.1 += count as u64;
                }
                None => {
                    map.insert(NGram::new(gram), (1, count as u64));
                }
            }
        }
    }
    Vocabulary::from_map(n, map)
}

const APPS_PER_PARTITION: usize = 32;

/// Builds the corpus vocabulary. `doc_freq` counts apps, `total_freq`
/// counts occurrences. Partitions of the corpus are built in parallel and
/// merged.
pub fn build_vocabulary(corpus: &[AppRecord], n: usize) -> Vocabulary {
    assert!(n >= 1, "n-gram length must be at least 1");
    corpus
        .par_chunks(APPS_PER_PARTITION)
        .map(|part| build_sequential(part, n))
        .reduce(
            || Vocabulary::empty(n),
            |a, b| merge_vocab(&a, &b).expect("partitions share n"),
        )
}

/// Union of two vocabularies over disjoint app sets, counts summed.
pub fn merge_vocab(a: &Vocabulary, b: &Vocabulary) -> Result<Vocabulary> {
    if a.n != b.n {
        return Err(Error::MixedN {
            left: a.n,
            right: b.n,
        });
    }
    let mut out = Vocabulary::empty(a.n);
    let cap = a.len().max(b.len());
    out.grams.reserve(cap);
    out.doc_freq.reserve(cap);
    out.total_freq.reserve(cap);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ord = match (a.grams.get(i), b.grams.get(j)) {
            (Some(x), Some(y)) => x.cmp(y),
            (Some(_), None) => Ordering::Less,
            (None, _) => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                out.push_from(a, i, 0, 0);
                i += 1;
            }
            Ordering::Greater => {
                out.push_from(b, j, 0, 0);
                j += 1;
            }
            Ordering::Equal => {
                out.push_from(a, i, b.doc_freq[j], b.total_freq[j]);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(out)
}

impl Vocabulary {
    fn push_from(&mut self, src: &Vocabulary, i: usize, extra_df: u64, extra_tf: u64) {
        self.grams.push(src.grams[i].clone());
        self.doc_freq.push(src.doc_freq[i] + extra_df);
        self.total_freq.push(src.total_freq[i] + extra_tf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::OpcodeSeq;

    fn app(id: &str, methods: &[&[u8]]) -> AppRecord {
        AppRecord::new(
            id,
            methods
                .iter()
                .map(|m| OpcodeSeq::new("LA;", "f()V", m.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_corpus() {
        assert!(build_vocabulary(&[], 3).is_empty());
    }

    #[test]
    fn single_method_bigrams() {
        let v = build_vocabulary(&[app("a", &[&[0x08, 0x54, 0x6e]])], 2);
        let hex: Vec<_> = v.grams().iter().map(NGram::to_hex).collect();
        assert_eq!(hex, ["0854", "546e"]);
        for (_, e) in v.iter() {
            assert_eq!((e.doc_freq, e.total_freq), (1, 1));
        }
    }

    #[test]
    fn doc_freq_counts_apps_not_methods() {
        let corpus = [
            app("a", &[&[0x6e, 0x0c], &[0x6e, 0x0c]]),
            app("b", &[&[0x6e, 0x0c, 0x6e]]),
        ];
        let v = build_vocabulary(&corpus, 2);
        let e = v.get(&[0x6e, 0x0c]).unwrap();
        assert_eq!((e.doc_freq, e.total_freq), (2, 3));
        let e = v.get(&[0x0c, 0x6e]).unwrap();
        assert_eq!((e.doc_freq, e.total_freq), (1, 1));
    }

    #[test]
    fn merge_identity_and_mixed_n() {
        let v = build_vocabulary(&[app("a", &[&[1, 2, 3, 4]])], 2);
        assert_eq!(merge_vocab(&v, &Vocabulary::empty(2)).unwrap(), v);
        assert!(matches!(
            merge_vocab(&v, &Vocabulary::empty(3)),
            Err(Error::MixedN { left: 2, right: 3 })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let v = build_vocabulary(&[app("a", &[&[1, 2, 3, 1, 2]]), app("b", &[&[2, 3]])], 2);
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(Vocabulary::read_tsv(buf.as_slice()).unwrap(), v);
    }
}
