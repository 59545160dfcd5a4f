use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{gain_from_rows, Discretizer};
use crate::dataset::{ColumnShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::ngram::NGram;

/// Features per ranking shard unless configured otherwise.
pub const DEFAULT_SHARD_SIZE: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IGScore {
    pub feature_index: usize,
    pub gram: NGram,
    pub ig: f64,
}

/// Descending gain, ties by ascending gram.
pub(crate) fn score_order(a_ig: f64, a_gram: &NGram, b_ig: f64, b_gram: &NGram) -> Ordering {
    b_ig.total_cmp(&a_ig).then_with(|| a_gram.cmp(b_gram))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFeatures {
    pub scores: Vec<IGScore>,
    pub threshold_used: Option<f64>,
    pub top_k_used: Option<usize>,
}

impl RankedFeatures {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Keep features with gain strictly greater than the threshold.
    Threshold(f64),
    /// Keep the first `k` of the ranking.
    TopK(usize),
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::Threshold(t) => write!(f, "ig>{t}"),
            SelectionRule::TopK(k) => write!(f, "top{k}"),
        }
    }
}

/// Scores every feature of a column shard. Each score depends only on its
/// own column and the targets.
pub fn rank_shard(shard: &ColumnShard, disc: Discretizer) -> Vec<IGScore> {
    let mut class_totals = vec![0u64; shard.num_classes];
    for &t in &shard.targets {
        class_totals[t] += 1;
    }
    let total = shard.num_rows() as u64;
    shard
        .features
        .iter()
        .zip(&shard.grams)
        .zip(&shard.columns)
        .map(|((&feature_index, gram), column)| {
            let ig = if total == 0 {
                0.0
            } else {
                let rows = disc.table_rows(column, &shard.targets, &class_totals);
                gain_from_rows(&rows, &class_totals, total)
            };
            IGScore {
                feature_index,
                gram: gram.clone(),
                ig,
            }
        })
        .collect()
}

/// Concatenates shard results and sorts them into the final ranking.
pub fn merge_rankings(parts: Vec<Vec<IGScore>>) -> Result<RankedFeatures> {
    let mut seen = HashSet::new();
    let mut scores = Vec::with_capacity(parts.iter().map(Vec::len).sum());
    for part in parts {
        for s in part {
            if !seen.insert(s.feature_index) {
                return Err(Error::DuplicateFeature(s.feature_index));
            }
            scores.push(s);
        }
    }
    scores.sort_by(|a, b| score_order(a.ig, &a.gram, b.ig, &b.gram));
    Ok(RankedFeatures {
        scores,
        threshold_used: None,
        top_k_used: None,
    })
}

/// Ranks all features of `ds`, scoring contiguous column shards of at most
/// `shard_size` features in parallel.
pub fn rank(ds: &LabeledDataset, disc: Discretizer, shard_size: usize) -> RankedFeatures {
    let shard_size = shard_size.max(1);
    let features: Vec<usize> = (0..ds.num_features()).collect();
    let parts: Vec<Vec<IGScore>> = features
        .par_chunks(shard_size)
        .map(|chunk| rank_shard(&ds.column_shard(chunk), disc))
        .collect();
    merge_rankings(parts).expect("contiguous shards are disjoint")
}

pub fn select(ranked: &RankedFeatures, rule: SelectionRule) -> BTreeSet<usize> {
    match rule {
        SelectionRule::Threshold(t) => ranked
            .scores
            .iter()
            .filter(|s| s.ig > t)
            .map(|s| s.feature_index)
            .collect(),
        SelectionRule::TopK(k) => ranked.scores.iter().take(k).map(|s| s.feature_index).collect(),
    }
}

/// Number of apps of each class containing each feature, `[feature][class]`.
pub fn class_doc_freqs(ds: &LabeledDataset) -> Vec<Vec<u64>> {
    let classes = ds.label_set().len();
    let mut df = vec![vec![0u64; classes]; ds.num_features()];
    for ((_, v), &t) in ds.rows().iter().zip(ds.targets()) {
        for &(i, _) in v.pairs() {
            df[i as usize][t] += 1;
        }
    }
    df
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopRow {
    pub rank: usize,
    pub feature_index: usize,
    pub gram: NGram,
    pub ig: f64,
    pub class_doc_freq: Vec<u64>,
    /// The only class whose apps contain the gram, if there is exactly one.
    pub exclusive: Option<String>,
}

fn exclusive_class(df: &[u64], label_set: &[String]) -> Option<String> {
    let mut present = df.iter().enumerate().filter(|(_, &c)| c > 0);
    match (present.next(), present.next()) {
        (Some((c, _)), None) => Some(label_set[c].clone()),
        _ => None,
    }
}

/// Every ranked feature annotated with per-class document frequencies.
pub fn ranking_rows(ranked: &RankedFeatures, ds: &LabeledDataset) -> Vec<TopRow> {
    top_table(ranked, ds, ranked.len())
}

/// The first `k` ranked features with per-class document frequencies and an
/// exclusivity mark.
pub fn top_table(ranked: &RankedFeatures, ds: &LabeledDataset, k: usize) -> Vec<TopRow> {
    let top = &ranked.scores[..k.min(ranked.len())];
    let features: Vec<usize> = top.iter().map(|s| s.feature_index).collect();
    let shard = ds.column_shard(&features);
    let classes = ds.label_set().len();
    top.iter()
        .zip(&shard.columns)
        .enumerate()
        .map(|(r, (s, col))| {
            let mut df = vec![0u64; classes];
            for &(row, _) in col {
                df[ds.targets()[row as usize]] += 1;
            }
            TopRow {
                rank: r + 1,
                feature_index: s.feature_index,
                gram: s.gram.clone(),
                ig: s.ig,
                exclusive: exclusive_class(&df, ds.label_set()),
                class_doc_freq: df,
            }
        })
        .collect()
}

/// `rank<TAB>gram<TAB>ig<TAB>df per class...<TAB>exclusive-or-dash`,
/// preceded by a `#` column header.
pub fn write_ranking_tsv<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a TopRow>,
    label_set: &[String],
    mut sink: W,
) -> std::io::Result<()> {
    let df_cols: Vec<String> = label_set.iter().map(|l| format!("df:{l}")).collect();
    writeln!(sink, "# rank\tgram\tig\t{}\texclusive", df_cols.join("\t"))?;
    for row in rows {
        write_ranking_line(&mut sink, row.rank, &row.gram, row.ig, &row.class_doc_freq, row.exclusive.as_deref())?;
    }
    sink.flush()
}

pub(crate) fn write_ranking_line<W: Write>(
    sink: &mut W,
    rank: usize,
    gram: &NGram,
    ig: f64,
    df: &[u64],
    exclusive: Option<&str>,
) -> std::io::Result<()> {
    let dfs: Vec<String> = df.iter().map(u64::to_string).collect();
    writeln!(
        sink,
        "{rank}\t{}\t{ig:.12}\t{}\t{}",
        gram.to_hex(),
        dfs.join("\t"),
        exclusive.unwrap_or("-")
    )
}

/// One gram hex per line, in ranking order.
pub fn write_selection<'a, W: Write>(grams: impl IntoIterator<Item = &'a NGram>, mut sink: W) -> std::io::Result<()> {
    for g in grams {
        writeln!(sink, "{}", g.to_hex())?;
    }
    sink.flush()
}

pub(crate) fn exclusive_of(df: &[u64], label_set: &[String]) -> Option<String> {
    exclusive_class(df, label_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::{app, small};
    use crate::ig::info_gain;
    use crate::ig::contingency_of;
    use crate::ngram::FeatureMode;

    fn scores(pairs: &[(&str, f64)]) -> RankedFeatures {
        let parts = pairs
            .iter()
            .enumerate()
            .map(|(i, (g, ig))| {
                vec![IGScore {
                    feature_index: i,
                    gram: NGram::from_hex(g).unwrap(),
                    ig: *ig,
                }]
            })
            .collect();
        merge_rankings(parts).unwrap()
    }

    #[test]
    fn strict_threshold() {
        let r = scores(&[("0a", 0.5), ("0b", 0.1), ("0c", 0.05)]);
        assert_eq!(select(&r, SelectionRule::Threshold(0.1)), [0].into_iter().collect());
        assert!(select(&r, SelectionRule::TopK(0)).is_empty());
        assert_eq!(select(&r, SelectionRule::TopK(2)), [0, 1].into_iter().collect());
        assert_eq!(select(&r, SelectionRule::Threshold(0.0)).len(), 3);
    }

    #[test]
    fn ties_break_by_gram() {
        let r = scores(&[("6e", 0.3), ("0c", 0.3), ("12", 0.7)]);
        let order: Vec<String> = r.scores.iter().map(|s| s.gram.to_hex()).collect();
        assert_eq!(order, ["12", "0c", "6e"]);
    }

    #[test]
    fn duplicate_feature_rejected() {
        let g = NGram::from_hex("0e").unwrap();
        let s = IGScore {
            feature_index: 3,
            gram: g,
            ig: 0.1,
        };
        assert!(matches!(
            merge_rankings(vec![vec![s.clone()], vec![s]]),
            Err(Error::DuplicateFeature(3))
        ));
    }

    #[test]
    fn single_feature_shard_equals_info_gain() {
        let ds = small(FeatureMode::Binary);
        for f in 0..ds.num_features() {
            let s = rank_shard(&ds.column_shard(&[f]), Discretizer::Presence);
            let expected = info_gain(&contingency_of(&ds, f, Discretizer::Presence).unwrap()).unwrap();
            assert_eq!(s[0].ig, expected);
        }
    }

    #[test]
    fn constant_features_score_zero() {
        let apps = [app("a", "x", &[&[1, 2, 3]]), app("b", "y", &[&[1, 2, 3]])];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary).unwrap();
        let s = rank_shard(&ds.column_shard(&[0, 1, 2]), Discretizer::Presence);
        assert!(s.iter().all(|x| x.ig == 0.0));
    }

    #[test]
    fn top_table_marks_exclusive_and_truncates() {
        let ds = small(FeatureMode::Binary);
        let r = rank(&ds, Discretizer::Presence, 2);
        let rows = top_table(&r, &ds, 100);
        assert_eq!(rows.len(), ds.num_features());
        let hex = |row: &TopRow| row.gram.to_hex();
        let six_e = rows.iter().find(|r| hex(r) == "6e").unwrap();
        assert_eq!(six_e.exclusive.as_deref(), Some("malware"));
        assert_eq!(six_e.class_doc_freq, vec![0, 2]);
        let twelve = rows.iter().find(|r| hex(r) == "12").unwrap();
        assert_eq!(twelve.exclusive, None);
        assert_eq!(rows[0].rank, 1);

        let mut out = Vec::new();
        write_ranking_tsv(&rows, ds.label_set(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# rank\tgram\tig\tdf:benign\tdf:malware\texclusive\n"));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }
}
