//! Information-gain feature scoring.
//!
//! All entropies are in bits with `0 * log2(0) = 0`. A feature's gain is
//! computed from its contingency table against the class variable:
//! `IG = H(class) - H(class | feature bucket)`.

mod external;
mod rank;

pub use external::{rank_external, ExternalRanking, RankedRow};
pub use rank::{
    class_doc_freqs, merge_rankings, rank, rank_shard, ranking_rows, select, top_table, write_ranking_tsv,
    write_selection, IGScore, RankedFeatures, SelectionRule, TopRow, DEFAULT_SHARD_SIZE,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;
const ZERO_SNAP: f64 = 1e-12;

/// Prior probabilities over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!("probability {p} is negative or not finite")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyTable);
        }
        Ok(ClassDistribution {
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn plogp_sum(probs: impl Iterator<Item = f64>) -> f64 {
    -probs.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

pub fn entropy(dist: &ClassDistribution) -> f64 {
    plogp_sum(dist.probs.iter().copied())
}

/// Entropy of the empirical distribution given by `counts`; 0 for no samples.
pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    plogp_sum(counts.iter().map(|&c| c as f64 / t))
}

/// Sample counts indexed `[bucket][class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub bucket_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>, bucket_labels: Vec<String>) -> Result<Self> {
        if let Some(w) = counts.first().map(Vec::len) {
            if counts.iter().any(|r| r.len() != w) {
                return Err(Error::InvalidArgument("ragged contingency table".into()));
            }
        }
        if bucket_labels.len() != counts.len() {
            return Err(Error::InvalidArgument("one label per bucket required".into()));
        }
        Ok(ContingencyTable { counts, bucket_labels })
    }

    /// Builds an unlabeled table.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let labels = (0..counts.len()).map(|j| j.to_string()).collect();
        Self::new(counts, labels)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn class_marginal(&self) -> Vec<u64> {
        let width = self.counts.first().map_or(0, Vec::len);
        let mut m = vec![0; width];
        for row in &self.counts {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        m
    }
}

/// `H(X|Y) = sum_j P(y_j) H(X | y_j)`; empty buckets contribute nothing.
pub fn conditional_entropy(t: &ContingencyTable) -> Result<f64> {
    let total = t.total();
    if total == 0 {
        return Err(Error::EmptyTable);
    }
    Ok(conditional_entropy_unchecked(&t.counts, total))
}

fn conditional_entropy_unchecked(rows: &[Vec<u64>], total: u64) -> f64 {
    let n = total as f64;
    rows.iter()
        .map(|row| {
            let r: u64 = row.iter().sum();
            if r == 0 {
                0.0
            } else {
                (r as f64 / n) * entropy_of_counts(row)
            }
        })
        .sum()
}

pub fn info_gain(t: &ContingencyTable) -> Result<f64> {
    let total = t.total();
    if total == 0 {
        return Err(Error::EmptyTable);
    }
    Ok(gain_from_rows(&t.counts, &t.class_marginal(), total))
}

pub(crate) fn gain_from_rows(rows: &[Vec<u64>], marginal: &[u64], total: u64) -> f64 {
    let ig = entropy_of_counts(marginal) - conditional_entropy_unchecked(rows, total);
    snap(ig)
}

/// Presence gain straight from per-class document frequencies.
pub(crate) fn presence_gain(present: &[u64], class_totals: &[u64]) -> f64 {
    let absent: Vec<u64> = class_totals.iter().zip(present).map(|(t, p)| t - p).collect();
    let total: u64 = class_totals.iter().sum();
    if total == 0 {
        return 0.0;
    }
    gain_from_rows(&[absent, present.to_vec()], class_totals, total)
}

fn snap(ig: f64) -> f64 {
    if ig.abs() <= ZERO_SNAP {
        0.0
    } else {
        ig.max(0.0)
    }
}

/// How feature values are bucketed before computing gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bins")]
pub enum Discretizer {
    /// Absent (0) vs present (>0).
    Presence,
    /// `bins` equal-width buckets over the range of the nonzero values;
    /// zeros always fall in the lowest bucket.
    EqualWidth(usize),
}

impl Default for Discretizer {
    fn default() -> Self {
        Discretizer::Presence
    }
}

impl fmt::Display for Discretizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discretizer::Presence => f.write_str("presence"),
            Discretizer::EqualWidth(b) => write!(f, "bins:{b}"),
        }
    }
}

impl FromStr for Discretizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "presence" {
            return Ok(Discretizer::Presence);
        }
        let bins = s
            .strip_prefix("bins:")
            .and_then(|b| b.parse::<usize>().ok())
            .filter(|&b| b >= 1)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown discretizer `{s}` (presence | bins:<k>)")))?;
        Ok(Discretizer::EqualWidth(bins))
    }
}

impl Discretizer {
    pub fn buckets(&self) -> usize {
        match *self {
            Discretizer::Presence => 2,
            Discretizer::EqualWidth(b) => b.max(1),
        }
    }

    /// Contingency rows for one sparse column.
    pub(crate) fn table_rows(
        &self,
        column: &[(u32, u32)],
        targets: &[usize],
        class_totals: &[u64],
    ) -> Vec<Vec<u64>> {
        let classes = class_totals.len();
        let mut rows = vec![vec![0u64; classes]; self.buckets()];
        let bucket = self.bucket_fn(column);
        let mut nonzero = vec![0u64; classes];
        for &(r, v) in column {
            let c = targets[r as usize];
            nonzero[c] += 1;
            rows[bucket(v)][c] += 1;
        }
        for c in 0..classes {
            rows[0][c] += class_totals[c] - nonzero[c];
        }
        rows
    }

    fn bucket_fn(&self, column: &[(u32, u32)]) -> Box<dyn Fn(u32) -> usize> {
        match *self {
            Discretizer::Presence => Box::new(|_| 1),
            Discretizer::EqualWidth(b) => {
                let b = b.max(1);
                let lo = column.iter().map(|&(_, v)| v).min().unwrap_or(0);
                let hi = column.iter().map(|&(_, v)| v).max().unwrap_or(0);
                Box::new(move |v| {
                    if hi == lo {
                        0
                    } else {
                        let pos = ((v - lo) as f64 * b as f64 / (hi - lo) as f64).floor() as usize;
                        pos.min(b - 1)
                    }
                })
            }
        }
    }

    fn bucket_labels(&self, column: &[(u32, u32)]) -> Vec<String> {
        match *self {
            Discretizer::Presence => vec!["absent".into(), "present".into()],
            Discretizer::EqualWidth(b) => {
                let lo = column.iter().map(|&(_, v)| v).min().unwrap_or(0) as f64;
                let hi = column.iter().map(|&(_, v)| v).max().unwrap_or(0) as f64;
                let w = (hi - lo) / b.max(1) as f64;
                (0..b.max(1))
                    .map(|j| {
                        let from = lo + w * j as f64;
                        let to = lo + w * (j + 1) as f64;
                        if j == 0 {
                            format!("0|[{from},{to})")
                        } else {
                            format!("[{from},{to})")
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Contingency table of one feature of `ds` against its labels.
pub fn contingency_of(ds: &LabeledDataset, feature_index: usize, disc: Discretizer) -> Result<ContingencyTable> {
    if feature_index >= ds.num_features() {
        return Err(Error::InvalidArgument(format!(
            "feature index {feature_index} out of range ({})",
            ds.num_features()
        )));
    }
    let shard = ds.column_shard(&[feature_index]);
    let column = &shard.columns[0];
    let rows = disc.table_rows(column, ds.targets(), &ds.class_counts());
    ContingencyTable::new(rows, disc.bucket_labels(column))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::app;
    use crate::ngram::FeatureMode;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entropy_examples() {
        let h = |p: Vec<f64>| entropy(&ClassDistribution::new(p).unwrap());
        assert_eq!(h(vec![0.5, 0.5]), 1.0);
        assert_eq!(h(vec![1.0]), 0.0);
        assert!(close(h(vec![0.25, 0.75]), 0.8113, 1e-4));
        assert_eq!(h(vec![0.0, 1.0]), 0.0);
    }

    #[test]
    fn invalid_distributions() {
        assert!(matches!(ClassDistribution::new(vec![0.5, 0.6]), Err(Error::InvalidDistribution(_))));
        assert!(matches!(ClassDistribution::new(vec![1.5, -0.5]), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn conditional_entropy_examples() {
        let pure = ContingencyTable::from_counts(vec![vec![3, 0], vec![0, 5]]).unwrap();
        assert_eq!(conditional_entropy(&pure).unwrap(), 0.0);

        let single = ContingencyTable::from_counts(vec![vec![1, 3]]).unwrap();
        let marginal = ClassDistribution::from_counts(&[1, 3]).unwrap();
        assert_eq!(conditional_entropy(&single).unwrap(), entropy(&marginal));

        // bucket present: 2 malware + 1 benign; bucket absent: 1 benign
        let t = ContingencyTable::from_counts(vec![vec![2, 1], vec![0, 1]]).unwrap();
        assert!(close(conditional_entropy(&t).unwrap(), 0.6887, 1e-4));
        assert!(close(info_gain(&t).unwrap(), 0.3113, 1e-4));
    }

    #[test]
    fn info_gain_extremes() {
        let identical = ContingencyTable::from_counts(vec![vec![4, 0], vec![0, 4]]).unwrap();
        assert_eq!(info_gain(&identical).unwrap(), 1.0);
        let constant = ContingencyTable::from_counts(vec![vec![0, 0], vec![3, 5]]).unwrap();
        assert_eq!(info_gain(&constant).unwrap(), 0.0);
        let empty = ContingencyTable::from_counts(vec![vec![0, 0]]).unwrap();
        assert!(matches!(info_gain(&empty), Err(Error::EmptyTable)));
        assert!(matches!(conditional_entropy(&empty), Err(Error::EmptyTable)));
    }

    #[test]
    fn product_table_has_zero_gain() {
        let a = [3u64, 7, 11];
        let b = [2u64, 5, 13, 1];
        let counts = a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect();
        let t = ContingencyTable::from_counts(counts).unwrap();
        assert_eq!(info_gain(&t).unwrap(), 0.0);
    }

    #[test]
    fn presence_contingency() {
        let apps = [
            app("m1", "M", &[&[0x6e]]),
            app("m2", "M", &[&[0x6e]]),
            app("b1", "B", &[&[0x6e]]),
            app("b2", "B", &[&[0x0e]]),
        ];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary).unwrap();
        let f = ds.vocab().index_of(&[0x6e]).unwrap();
        let t = contingency_of(&ds, f, Discretizer::Presence).unwrap();
        // label_set = [B, M]
        assert_eq!(t.counts, vec![vec![1, 0], vec![1, 2]]);
        assert_eq!(t.total(), 4);
        assert!(close(info_gain(&t).unwrap(), 0.3113, 1e-4));
    }

    #[test]
    fn equal_width_bins_use_nonzero_range() {
        let apps = [
            app("a", "x", &[&[0x0e]]),
            app("b", "x", &[&[0x0e]]),
            app("c", "y", &[&[0x6e, 0x6e, 0x6e]]),
            app("d", "y", &[&[0x6e, 0x6e, 0x6e, 0x6e, 0x6e]]),
        ];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
        let f = ds.vocab().index_of(&[0x6e]).unwrap();
        let t = contingency_of(&ds, f, Discretizer::EqualWidth(2)).unwrap();
        // column {0,0,3,5}: buckets {0,0,3} / {5}
        assert_eq!(t.counts, vec![vec![2, 1], vec![0, 1]]);
    }

    #[test]
    fn all_zero_column_single_bucket() {
        let apps = [app("a", "x", &[&[0x0e]]), app("b", "y", &[&[0x12]])];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary).unwrap();
        let sub = ds.subset_rows(&[0]);
        let f = ds.vocab().index_of(&[0x12]).unwrap();
        let t = contingency_of(&sub, f, Discretizer::Presence).unwrap();
        assert_eq!(t.counts.iter().filter(|r| r.iter().sum::<u64>() > 0).count(), 1);
        assert_eq!(info_gain(&t).unwrap(), 0.0);
    }

    #[test]
    fn discretizer_parse() {
        assert_eq!("presence".parse::<Discretizer>().unwrap(), Discretizer::Presence);
        assert_eq!("bins:4".parse::<Discretizer>().unwrap(), Discretizer::EqualWidth(4));
        assert!("bins:0".parse::<Discretizer>().is_err());
    }
}
