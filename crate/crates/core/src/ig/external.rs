//! Bounded-memory ranking over an [`ExternalVocab`].
//!
//! Presence gain only needs per-class document frequencies, which the
//! external vocabulary already carries. Scores are produced in shards of at
//! most `max_entries`, each shard sorted and spilled as a run, and the runs
//! merged into the final order. The result is identical to ranking the
//! materialized dataset with [`Discretizer::Presence`](super::Discretizer).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use super::presence_gain;
use super::rank::{exclusive_of, score_order, write_ranking_line, TopRow};
use crate::error::{Error, Result};
use crate::ngram::{ExternalVocab, NGram};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    pub feature_index: u64,
    pub gram: NGram,
    pub ig: f64,
    pub class_df: Vec<u32>,
}

impl RankedRow {
    pub fn to_top_row(&self, rank: usize, label_set: &[String]) -> TopRow {
        let df: Vec<u64> = self.class_df.iter().map(|&c| c as u64).collect();
        TopRow {
            rank,
            feature_index: self.feature_index as usize,
            gram: self.gram.clone(),
            ig: self.ig,
            exclusive: exclusive_of(&df, label_set),
            class_doc_freq: df,
        }
    }
}

struct RowCodec {
    n: usize,
    classes: usize,
}

impl RowCodec {
    fn write<W: Write>(&self, w: &mut W, r: &RankedRow) -> io::Result<()> {
        w.write_all(&r.feature_index.to_le_bytes())?;
        w.write_all(&r.ig.to_bits().to_le_bytes())?;
        w.write_all(r.gram.bytes())?;
        for c in &r.class_df {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    fn read<R: Read>(&self, r: &mut R, buf: &mut Vec<u8>) -> io::Result<Option<RankedRow>> {
        buf.resize(16 + self.n + 4 * self.classes, 0);
        match r.read_exact(buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let feature_index = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let ig = f64::from_bits(u64::from_le_bytes(buf[8..16].try_into().unwrap()));
        let gram = NGram::new(&buf[16..16 + self.n]);
        let class_df = buf[16 + self.n..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Some(RankedRow {
            feature_index,
            gram,
            ig,
            class_df,
        }))
    }
}

fn sort_rows(rows: &mut [RankedRow]) {
    rows.sort_unstable_by(|a, b| score_order(a.ig, &a.gram, b.ig, &b.gram));
}

enum Run {
    Memory(Vec<RankedRow>),
    File(PathBuf),
}

pub struct ExternalRanking {
    n: usize,
    classes: usize,
    len: u64,
    runs: Vec<Run>,
    peak_entries: usize,
    _dir: Option<TempDir>,
}

/// Scores every gram of `vocab` by presence gain against `class_totals`
/// (apps per class), holding at most `max_entries` scores in memory.
pub fn rank_external(
    vocab: &ExternalVocab,
    class_totals: &[u64],
    max_entries: usize,
    spill_dir: Option<&Path>,
) -> Result<ExternalRanking> {
    if class_totals.len() != vocab.classes() {
        return Err(Error::InvalidArgument(format!(
            "{} class totals for a vocabulary tracking {} classes",
            class_totals.len(),
            vocab.classes()
        )));
    }
    let max_entries = max_entries.max(1);
    let codec = RowCodec {
        n: vocab.n(),
        classes: vocab.classes(),
    };
    let mut dir: Option<TempDir> = None;
    let mut runs = Vec::new();
    let mut buffer: Vec<RankedRow> = Vec::new();
    let mut peak = 0usize;
    let mut len = 0u64;
    let mut present = vec![0u64; class_totals.len()];

    let mut flush = |buffer: &mut Vec<RankedRow>, runs: &mut Vec<Run>| -> Result<()> {
        sort_rows(buffer);
        let d = match &dir {
            Some(d) => d,
            None => {
                let made = match spill_dir {
                    Some(p) => tempfile::Builder::new().prefix("rank-spill").tempdir_in(p),
                    None => tempfile::Builder::new().prefix("rank-spill").tempdir(),
                }
                .map_err(|e| Error::io(spill_dir.unwrap_or(Path::new("<tmp>")), e))?;
                dir.insert(made)
            }
        };
        let path = d.path().join(format!("rank-{:06}.bin", runs.len()));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        for r in buffer.drain(..) {
            codec.write(&mut w, &r).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        runs.push(Run::File(path));
        Ok(())
    };

    for (index, item) in vocab.iter()?.enumerate() {
        let (gram, stats) = item?;
        for (p, &c) in present.iter_mut().zip(&stats.class_df) {
            *p = c as u64;
        }
        let ig = presence_gain(&present, class_totals);
        if buffer.len() >= max_entries {
            flush(&mut buffer, &mut runs)?;
        }
        buffer.push(RankedRow {
            feature_index: index as u64,
            gram,
            ig,
            class_df: stats.class_df,
        });
        peak = peak.max(buffer.len());
        len += 1;
    }
    if runs.is_empty() {
        sort_rows(&mut buffer);
        runs.push(Run::Memory(buffer));
    } else if !buffer.is_empty() {
        flush(&mut buffer, &mut runs)?;
    }
    drop(flush);
    Ok(ExternalRanking {
        n: vocab.n(),
        classes: vocab.classes(),
        len,
        runs,
        peak_entries: peak,
        _dir: dir,
    })
}

impl ExternalRanking {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn peak_entries(&self) -> usize {
        self.peak_entries
    }

    pub fn spilled(&self) -> bool {
        self._dir.is_some()
    }

    /// Rows in ranking order.
    pub fn iter(&self) -> Result<RankIter<'_>> {
        let mut sources = Vec::new();
        for run in &self.runs {
            sources.push(match run {
                Run::Memory(v) => Source::Memory(v.iter()),
                Run::File(p) => Source::File(
                    BufReader::new(File::open(p).map_err(|e| Error::io(p, e))?),
                    p.clone(),
                ),
            });
        }
        let mut it = RankIter {
            codec: RowCodec {
                n: self.n,
                classes: self.classes,
            },
            sources,
            heap: BinaryHeap::new(),
            buf: Vec::new(),
        };
        for i in 0..it.sources.len() {
            it.advance(i)?;
        }
        Ok(it)
    }

    /// Number of grams with gain strictly above `t`.
    pub fn count_above(&self, t: f64) -> Result<u64> {
        let mut count = 0;
        for row in self.iter()? {
            if row?.ig > t {
                count += 1;
            } else {
                break;
            }
        }
        Ok(count)
    }

    /// Streams the ranking TSV (same layout as
    /// [`write_ranking_tsv`](super::write_ranking_tsv)).
    pub fn write_tsv<W: Write>(&self, label_set: &[String], mut sink: W) -> Result<()> {
        let io_err = |e| Error::io("<ranking sink>", e);
        let df_cols: Vec<String> = label_set.iter().map(|l| format!("df:{l}")).collect();
        writeln!(sink, "# rank\tgram\tig\t{}\texclusive", df_cols.join("\t")).map_err(io_err)?;
        for (i, row) in self.iter()?.enumerate() {
            let row = row?;
            let df: Vec<u64> = row.class_df.iter().map(|&c| c as u64).collect();
            let excl = exclusive_of(&df, label_set);
            write_ranking_line(&mut sink, i + 1, &row.gram, row.ig, &df, excl.as_deref()).map_err(io_err)?;
        }
        sink.flush().map_err(io_err)
    }
}

enum Source<'a> {
    Memory(std::slice::Iter<'a, RankedRow>),
    File(BufReader<File>, PathBuf),
}

struct Head {
    row: RankedRow,
    source: usize,
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Head {}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Head {
    // max-heap: the best-ranked row must compare greatest
    fn cmp(&self, other: &Self) -> Ordering {
        score_order(other.row.ig, &other.row.gram, self.row.ig, &self.row.gram)
            .then_with(|| other.source.cmp(&self.source))
    }
}

pub struct RankIter<'a> {
    codec: RowCodec,
    sources: Vec<Source<'a>>,
    heap: BinaryHeap<Head>,
    buf: Vec<u8>,
}

impl RankIter<'_> {
    fn advance(&mut self, i: usize) -> Result<()> {
        let next = match &mut self.sources[i] {
            Source::Memory(it) => it.next().cloned(),
            Source::File(r, p) => self.codec.read(r, &mut self.buf).map_err(|e| Error::io(p.as_path(), e))?,
        };
        if let Some(row) = next {
            self.heap.push(Head { row, source: i });
        }
        Ok(())
    }
}

impl Iterator for RankIter<'_> {
    type Item = Result<RankedRow>;

    fn next(&mut self) -> Option<Self::Item> {
        let Head { row, source } = self.heap.pop()?;
        if let Err(e) = self.advance(source) {
            return Some(Err(e));
        }
        Some(Ok(row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledDataset;
    use crate::ig::{rank, ranking_rows, Discretizer};
    use crate::ingest::{AppRecord, OpcodeSeq};
    use crate::ngram::{ExternalVocabBuilder, FeatureMode, SpillConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_in_memory_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels = ["a", "b", "c"];
        let apps: Vec<AppRecord> = (0..40)
            .map(|i| {
                let ops: Vec<u8> = (0..40).map(|_| rng.gen_range(0..6u8)).collect();
                AppRecord::new(format!("x{i:02}"), vec![OpcodeSeq::new("LA;", "f()V", ops)])
                    .unwrap()
                    .with_label(labels[i % 3])
            })
            .collect();
        let ds = LabeledDataset::from_corpus(&apps, 3, FeatureMode::Binary).unwrap();
        let expected = ranking_rows(&rank(&ds, Discretizer::Presence, 17), &ds);

        let config = SpillConfig {
            max_entries: 30,
            buckets: 4,
            dir: None,
        };
        let mut b = ExternalVocabBuilder::new(3, 3, config).unwrap();
        let classes: Vec<usize> = ds.targets().to_vec();
        b.add_apps(&apps, &classes).unwrap();
        let vocab = b.finish().unwrap();
        let ranking = rank_external(&vocab, &ds.class_counts(), 25, None).unwrap();
        assert!(ranking.spilled());
        assert!(ranking.peak_entries() <= 25);
        let got: Vec<TopRow> = ranking
            .iter()
            .unwrap()
            .enumerate()
            .map(|(i, r)| r.unwrap().to_top_row(i + 1, ds.label_set()))
            .collect();
        assert_eq!(got, expected);
        let above = expected.iter().filter(|r| r.ig > 0.1).count() as u64;
        assert_eq!(ranking.count_above(0.1).unwrap(), above);
    }
}
