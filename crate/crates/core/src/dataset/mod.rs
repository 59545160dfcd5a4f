//! Labeled sparse datasets over a fixed vocabulary.

mod export;
mod folds;
mod native;

pub use export::{export_arff, export_csv};
pub use folds::{stratified_folds, Fold};
pub use native::{read_dataset, write_dataset};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{check_unique_ids, AppRecord};
use crate::ngram::{build_vocabulary, featurize, FeatureMode, NGram, SparseVector, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    vocab: Vocabulary,
    mode: FeatureMode,
    rows: Vec<(String, SparseVector)>,
    labels: BTreeMap<String, String>,
    label_set: Vec<String>,
    targets: Vec<usize>,
}

impl LabeledDataset {
    /// Assembles a dataset, checking that every row is labeled, indices fit
    /// the vocabulary and all rows share `mode`. `label_set` defaults to the
    /// sorted distinct labels of the rows.
    pub fn new(
        vocab: Vocabulary,
        mode: FeatureMode,
        rows: Vec<(String, SparseVector)>,
        labels: BTreeMap<String, String>,
        label_set: Option<Vec<String>>,
    ) -> Result<Self> {
        check_unique_ids(rows.iter().map(|(id, _)| id.as_str()))?;
        let missing: Vec<String> = rows
            .iter()
            .filter(|(id, _)| !labels.contains_key(id))
            .map(|(id, _)| id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
        for (id, v) in &rows {
            if v.mode() != mode {
                return Err(Error::ModeMismatch(format!("row `{id}` is {} in a {mode} dataset", v.mode())));
            }
            if let Some(max) = v.max_index() {
                if max as usize >= vocab.len() {
                    return Err(Error::DimensionMismatch {
                        index: max as usize,
                        vocab_size: vocab.len(),
                    });
                }
            }
        }
        let row_labels: BTreeSet<&str> = rows.iter().map(|(id, _)| labels[id].as_str()).collect();
        let label_set = match label_set {
            Some(ls) => {
                if let Some(l) = row_labels.iter().find(|l| !ls.iter().any(|x| x == *l)) {
                    return Err(Error::InvalidArgument(format!("label `{l}` missing from label set")));
                }
                ls
            }
            None => row_labels.iter().map(|s| s.to_string()).collect(),
        };
        let targets = rows
            .iter()
            .map(|(id, _)| label_set.iter().position(|l| *l == labels[id]).expect("checked above"))
            .collect();
        let labels = rows.iter().map(|(id, _)| (id.clone(), labels[id].clone())).collect();
        Ok(LabeledDataset {
            vocab,
            mode,
            rows,
            labels,
            label_set,
            targets,
        })
    }

    /// Builds the vocabulary of `apps` and featurizes every app. Apps must
    /// carry labels.
    pub fn from_corpus(apps: &[AppRecord], n: usize, mode: FeatureMode) -> Result<Self> {
        let vocab = build_vocabulary(apps, n);
        Self::from_corpus_with_vocab(apps, vocab, mode)
    }

    pub fn from_corpus_with_vocab(apps: &[AppRecord], vocab: Vocabulary, mode: FeatureMode) -> Result<Self> {
        check_unique_ids(apps.iter().map(|a| a.app_id.as_str()))?;
        let missing: Vec<String> = apps
            .iter()
            .filter(|a| a.label.is_none())
            .map(|a| a.app_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
        let n = vocab.n();
        let rows = apps
            .par_iter()
            .map(|a| Ok((a.app_id.clone(), featurize(a, &vocab, n, mode)?)))
            .collect::<Result<Vec<_>>>()?;
        let labels = apps
            .iter()
            .map(|a| (a.app_id.clone(), a.label.clone().expect("checked")))
            .collect();
        Self::new(vocab, mode, rows, labels, None)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn n(&self) -> usize {
        self.vocab.n()
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn rows(&self) -> &[(String, SparseVector)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.vocab.len()
    }

    pub fn labels(&self) -> &BTreeMap<String, String> {
        &self.labels
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    /// Class index (into `label_set`) of each row.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.label_set.len()];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }

    /// Rows at `indices`, same vocabulary and label set.
    pub fn subset_rows(&self, indices: &[usize]) -> LabeledDataset {
        let rows: Vec<_> = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = rows
            .iter()
            .map(|(id, _)| (id.clone(), self.labels[id].clone()))
            .collect();
        LabeledDataset {
            vocab: self.vocab.clone(),
            mode: self.mode,
            rows,
            labels,
            label_set: self.label_set.clone(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// Same rows in binary mode.
    pub fn to_binary(&self) -> LabeledDataset {
        let mut out = self.clone();
        out.mode = FeatureMode::Binary;
        for (_, v) in &mut out.rows {
            *v = v.to_binary();
        }
        out
    }

    /// Column-major copy of the feature matrix: for each feature, the
    /// `(row, value)` pairs with nonzero value, rows ascending.
    pub fn columns(&self) -> Vec<Vec<(u32, u32)>> {
        let mut cols = vec![Vec::new(); self.vocab.len()];
        for (r, (_, v)) in self.rows.iter().enumerate() {
            for &(i, val) in v.pairs() {
                cols[i as usize].push((r as u32, val));
            }
        }
        cols
    }

    /// A column-wise shard over `features` (all rows).
    pub fn column_shard(&self, features: &[usize]) -> ColumnShard {
        let mut pos = vec![usize::MAX; self.vocab.len()];
        for (k, &f) in features.iter().enumerate() {
            pos[f] = k;
        }
        let mut columns = vec![Vec::new(); features.len()];
        for (r, (_, v)) in self.rows.iter().enumerate() {
            for &(i, val) in v.pairs() {
                let k = pos[i as usize];
                if k != usize::MAX {
                    columns[k].push((r as u32, val));
                }
            }
        }
        ColumnShard {
            features: features.to_vec(),
            grams: features.iter().map(|&f| self.vocab.gram(f).clone()).collect(),
            columns,
            targets: self.targets.clone(),
            num_classes: self.label_set.len(),
        }
    }

    /// Dense row-major matrix; for tests and small exports.
    pub fn to_dense(&self) -> Vec<Vec<u32>> {
        self.rows
            .iter()
            .map(|(_, v)| {
                let mut d = vec![0; self.vocab.len()];
                for &(i, val) in v.pairs() {
                    d[i as usize] = val;
                }
                d
            })
            .collect()
    }
}

/// A subset of feature columns with the class target of every row.
#[derive(Debug, Clone)]
pub struct ColumnShard {
    pub features: Vec<usize>,
    pub grams: Vec<NGram>,
    pub columns: Vec<Vec<(u32, u32)>>,
    pub targets: Vec<usize>,
    pub num_classes: usize,
}

impl ColumnShard {
    pub fn num_rows(&self) -> usize {
        self.targets.len()
    }
}

/// Restricts the dataset to `keep` (any order, out-of-range ignored) and
/// reindexes features canonically.
pub fn project(ds: &LabeledDataset, keep: &BTreeSet<usize>) -> LabeledDataset {
    let kept: Vec<usize> = keep.iter().copied().filter(|&i| i < ds.vocab.len()).collect();
    let mut map = vec![None; ds.vocab.len()];
    for (new, &old) in kept.iter().enumerate() {
        map[old] = Some(new as u32);
    }
    let rows = ds
        .rows
        .iter()
        .map(|(id, v)| (id.clone(), v.remap(|i| map[i as usize])))
        .collect();
    LabeledDataset {
        vocab: ds.vocab.restrict(&kept),
        mode: ds.mode,
        rows,
        labels: ds.labels.clone(),
        label_set: ds.label_set.clone(),
        targets: ds.targets.clone(),
    }
}

/// Feature indices of `grams` that exist in the dataset's vocabulary.
pub fn indices_of_grams<'a>(ds: &LabeledDataset, grams: impl IntoIterator<Item = &'a NGram>) -> BTreeSet<usize> {
    grams
        .into_iter()
        .filter_map(|g| ds.vocab.index_of(g.bytes()))
        .collect()
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::ingest::OpcodeSeq;

    pub fn app(id: &str, label: &str, methods: &[&[u8]]) -> AppRecord {
        AppRecord::new(
            id,
            methods
                .iter()
                .map(|m| OpcodeSeq::new("LA;", "f()V", m.to_vec()))
                .collect(),
        )
        .unwrap()
        .with_label(label)
    }

    pub fn small(mode: FeatureMode) -> LabeledDataset {
        let apps = [
            app("a1", "malware", &[&[0x6e, 0x0c, 0x6e, 0x0c]]),
            app("a2", "malware", &[&[0x6e, 0x0c], &[0x12]]),
            app("a3", "benign", &[&[0x12, 0x0e]]),
            app("a4", "benign", &[&[0x0e]]),
        ];
        LabeledDataset::from_corpus(&apps, 1, mode).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn construction_and_targets() {
        let ds = small(FeatureMode::Frequency);
        assert_eq!(ds.label_set(), ["benign", "malware"]);
        assert_eq!(ds.targets(), &[1, 1, 0, 0]);
        assert_eq!(ds.num_features(), 4);
        assert_eq!(ds.class_counts(), vec![2, 2]);
    }

    #[test]
    fn missing_label_is_error() {
        let mut apps = vec![app("x", "m", &[&[1]])];
        apps.push(AppRecord::new("y", vec![]).unwrap());
        match LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary) {
            Err(Error::MissingLabels(ids)) => assert_eq!(ids, ["y"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_app_is_error() {
        let apps = vec![app("x", "m", &[&[1]]), app("x", "b", &[&[2]])];
        assert!(matches!(
            LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary),
            Err(Error::DuplicateAppId(_))
        ));
    }

    #[test]
    fn project_all_none_and_subset() {
        let ds = small(FeatureMode::Frequency);
        let all: BTreeSet<usize> = (0..ds.num_features()).collect();
        assert_eq!(project(&ds, &all), ds);

        let none = project(&ds, &BTreeSet::new());
        assert_eq!(none.num_features(), 0);
        assert!(none.rows().iter().all(|(_, v)| v.nnz() == 0));
        assert_eq!(none.labels(), ds.labels());

        let some: BTreeSet<usize> = [1, 3].into_iter().collect();
        let p = project(&ds, &some);
        assert_eq!(p.num_features(), 2);
        assert_eq!(p.vocab().gram(0), ds.vocab().gram(1));
        for ((_, a), (_, b)) in ds.rows().iter().zip(p.rows()) {
            assert!(b.nnz() <= a.nnz());
        }
        let again = project(&p, &(0..p.num_features()).collect());
        assert_eq!(again, p);
    }

    #[test]
    fn column_shard_matches_columns() {
        let ds = small(FeatureMode::Frequency);
        let cols = ds.columns();
        let shard = ds.column_shard(&[2, 0]);
        assert_eq!(shard.columns[0], cols[2]);
        assert_eq!(shard.columns[1], cols[0]);
        assert_eq!(shard.grams[0], *ds.vocab().gram(2));
    }
}
