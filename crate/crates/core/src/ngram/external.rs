//! Out-of-core vocabulary construction.
//!
//! Distinct grams are accumulated in a hash map capped at
//! `SpillConfig::max_entries`. When the cap is hit the map is spilled into
//! hash-partitioned bucket files. On finish each bucket is aggregated on
//! its own (re-partitioned with a fresh salt if it still exceeds the cap),
//! sorted, and written as a run. Iteration is a k-way merge over the runs,
//! so the full vocabulary never needs to be resident.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tempfile::TempDir;

use super::{app_gram_counts, NGram, Vocabulary};
use crate::error::{Error, Result};
use crate::ingest::AppRecord;

const MAX_RESPLIT_DEPTH: u32 = 8;

#[derive(Debug, Clone)]
pub struct SpillConfig {
    /// Maximum distinct grams held in memory at once.
    pub max_entries: usize,
    /// Number of hash partitions per spill level.
    pub buckets: usize,
    /// Parent directory for spill files; the system temp dir when `None`.
    pub dir: Option<PathBuf>,
}

impl Default for SpillConfig {
    fn default() -> Self {
        SpillConfig {
            max_entries: 1_000_000,
            buckets: 16,
            dir: None,
        }
    }
}

/// Corpus statistics for one gram: occurrences, and apps containing it per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramStats {
    pub total_freq: u64,
    pub class_df: Vec<u32>,
}

impl GramStats {
    pub fn doc_freq(&self) -> u64 {
        self.class_df.iter().map(|&c| c as u64).sum()
    }

    fn absorb(&mut self, other: &GramStats) {
        self.total_freq += other.total_freq;
        for (a, b) in self.class_df.iter_mut().zip(&other.class_df) {
            *a += b;
        }
    }
}

struct Codec {
    n: usize,
    classes: usize,
}

impl Codec {
    fn record_len(&self) -> usize {
        self.n + 8 + 4 * self.classes
    }

    fn write<W: Write>(&self, w: &mut W, gram: &[u8], s: &GramStats) -> io::Result<()> {
        w.write_all(gram)?;
        w.write_all(&s.total_freq.to_le_bytes())?;
        for c in &s.class_df {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    fn read<R: Read>(&self, r: &mut R, buf: &mut Vec<u8>) -> io::Result<Option<(NGram, GramStats)>> {
        buf.resize(self.record_len(), 0);
        match r.read_exact(buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let gram = NGram::new(&buf[..self.n]);
        let total_freq = u64::from_le_bytes(buf[self.n..self.n + 8].try_into().unwrap());
        let class_df = buf[self.n + 8..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Some((gram, GramStats { total_freq, class_df })))
    }
}

fn bucket_of(gram: &[u8], salt: u32, buckets: usize) -> usize {
    let mut h = DefaultHasher::new();
    salt.hash(&mut h);
    gram.hash(&mut h);
    (h.finish() % buckets as u64) as usize
}

struct SpillArea {
    dir: TempDir,
    next_file: usize,
}

impl SpillArea {
    fn new(parent: Option<&Path>) -> Result<Self> {
        let dir = match parent {
            Some(p) => tempfile::Builder::new().prefix("vocab-spill").tempdir_in(p),
            None => tempfile::Builder::new().prefix("vocab-spill").tempdir(),
        }
        .map_err(|e| Error::io(parent.unwrap_or(Path::new("<tmp>")), e))?;
        Ok(SpillArea { dir, next_file: 0 })
    }

    fn fresh_path(&mut self, tag: &str) -> PathBuf {
        self.next_file += 1;
        self.dir.path().join(format!("{tag}-{:06}.bin", self.next_file))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub struct ExternalVocabBuilder {
    n: usize,
    classes: usize,
    config: SpillConfig,
    map: HashMap<NGram, GramStats>,
    area: Option<SpillArea>,
    bucket_paths: Vec<PathBuf>,
    bucket_writers: Vec<BufWriter<File>>,
    peak_entries: usize,
    apps: usize,
}

impl ExternalVocabBuilder {
    /// `classes` is the number of label classes tracked per gram; use 1 for
    /// an unlabeled corpus.
    pub fn new(n: usize, classes: usize, config: SpillConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if config.max_entries == 0 || config.buckets < 2 {
            return Err(Error::InvalidArgument(
                "spill config needs max_entries >= 1 and buckets >= 2".into(),
            ));
        }
        Ok(ExternalVocabBuilder {
            n,
            classes: classes.max(1),
            config,
            map: HashMap::new(),
            area: None,
            bucket_paths: Vec::new(),
            bucket_writers: Vec::new(),
            peak_entries: 0,
            apps: 0,
        })
    }

    fn codec(&self) -> Codec {
        Codec {
            n: self.n,
            classes: self.classes,
        }
    }

    pub fn add_app(&mut self, app: &AppRecord, class: usize) -> Result<()> {
        let counts = app_gram_counts(app, self.n);
        self.absorb_counts(counts, class)
    }

    /// Adds many apps, counting grams of each app in parallel.
    pub fn add_apps(&mut self, apps: &[AppRecord], classes: &[usize]) -> Result<()> {
        assert_eq!(apps.len(), classes.len());
        const CHUNK: usize = 64;
        for (chunk, cls) in apps.chunks(CHUNK).zip(classes.chunks(CHUNK)) {
            let n = self.n;
            let counted: Vec<_> = chunk.par_iter().map(|a| app_gram_counts(a, n)).collect();
            for (counts, &c) in counted.into_iter().zip(cls) {
                self.absorb_counts(counts, c)?;
            }
        }
        Ok(())
    }

    fn absorb_counts(&mut self, counts: HashMap<&[u8], u32>, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(Error::InvalidArgument(format!(
                "class index {class} out of range ({} classes)",
                self.classes
            )));
        }
        for (gram, count) in counts {
            if let Some(s) = self.map.get_mut(gram) {
                s.total_freq += count as u64;
                s.class_df[class] += 1;
                continue;
            }
            if self.map.len() >= self.config.max_entries {
                self.spill()?;
            }
            let mut class_df = vec![0; self.classes];
            class_df[class] = 1;
            self.map.insert(
                NGram::new(gram),
                GramStats {
                    total_freq: count as u64,
                    class_df,
                },
            );
            self.peak_entries = self.peak_entries.max(self.map.len());
        }
        self.apps += 1;
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        if self.area.is_none() {
            let mut area = SpillArea::new(self.config.dir.as_deref())?;
            for _ in 0..self.config.buckets {
                let p = area.fresh_path("bucket");
                self.bucket_writers.push(create(&p)?);
                self.bucket_paths.push(p);
            }
            self.area = Some(area);
        }
        log::debug!("spilling {} grams to {} buckets", self.map.len(), self.config.buckets);
        let codec = self.codec();
        for (gram, stats) in self.map.drain() {
            let b = bucket_of(gram.bytes(), 0, self.config.buckets);
            codec
                .write(&mut self.bucket_writers[b], gram.bytes(), &stats)
                .map_err(|e| Error::io(&self.bucket_paths[b], e))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<ExternalVocab> {
        let codec = self.codec();
        if self.area.is_none() {
            let mut entries: Vec<_> = self.map.drain().collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            return Ok(ExternalVocab {
                n: self.n,
                classes: self.classes,
                len: entries.len() as u64,
                runs: vec![Run::Memory(entries)],
                _area: None,
                peak_entries: self.peak_entries,
                apps: self.apps,
            });
        }
        self.spill()?;
        for (w, p) in self.bucket_writers.drain(..).zip(&self.bucket_paths) {
            w.into_inner()
                .map_err(|e| Error::io(p, e.into_error()))?
                .sync_all()
                .ok();
        }
        let mut area = self.area.take().expect("spilled");
        let mut runs = Vec::new();
        let mut len = 0u64;
        let mut peak = self.peak_entries;
        let paths = std::mem::take(&mut self.bucket_paths);
        for p in paths {
            self.process_bucket(&codec, &mut area, &p, 1, &mut runs, &mut len, &mut peak)?;
        }
        Ok(ExternalVocab {
            n: self.n,
            classes: self.classes,
            len,
            runs,
            _area: Some(area),
            peak_entries: peak,
            apps: self.apps,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn process_bucket(
        &self,
        codec: &Codec,
        area: &mut SpillArea,
        path: &Path,
        depth: u32,
        runs: &mut Vec<Run>,
        len: &mut u64,
        peak: &mut usize,
    ) -> Result<()> {
        let mut map: HashMap<NGram, GramStats> = HashMap::new();
        let mut reader = open(path)?;
        let mut buf = Vec::new();
        let mut overflow = false;
        while let Some((g, s)) = codec.read(&mut reader, &mut buf).map_err(|e| Error::io(path, e))? {
            match map.get_mut(&g) {
                Some(e) => e.absorb(&s),
                None => {
                    if map.len() >= self.config.max_entries {
                        overflow = true;
                        break;
                    }
                    map.insert(g, s);
                    *peak = (*peak).max(map.len());
                }
            }
        }
        if overflow {
            drop(map);
            if depth > MAX_RESPLIT_DEPTH {
                return Err(Error::InvalidArgument(format!(
                    "spill bucket still exceeds {} entries after {MAX_RESPLIT_DEPTH} re-partitions",
                    self.config.max_entries
                )));
            }
            log::debug!("re-partitioning oversized spill bucket at depth {depth}");
            let subs: Vec<PathBuf> = (0..self.config.buckets).map(|_| area.fresh_path("bucket")).collect();
            let mut writers = subs.iter().map(|p| create(p)).collect::<Result<Vec<_>>>()?;
            let mut reader = open(path)?;
            while let Some((g, s)) = codec.read(&mut reader, &mut buf).map_err(|e| Error::io(path, e))? {
                let b = bucket_of(g.bytes(), depth, self.config.buckets);
                codec.write(&mut writers[b], g.bytes(), &s).map_err(|e| Error::io(&subs[b], e))?;
            }
            for (mut w, p) in writers.into_iter().zip(&subs) {
                w.flush().map_err(|e| Error::io(p, e))?;
            }
            std::fs::remove_file(path).ok();
            for sub in &subs {
                self.process_bucket(codec, area, sub, depth + 1, runs, len, peak)?;
            }
            return Ok(());
        }
        let mut entries: Vec<_> = map.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if entries.is_empty() {
            std::fs::remove_file(path).ok();
            return Ok(());
        }
        let run_path = area.fresh_path("run");
        let mut w = create(&run_path)?;
        for (g, s) in &entries {
            codec.write(&mut w, g.bytes(), s).map_err(|e| Error::io(&run_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&run_path, e))?;
        std::fs::remove_file(path).ok();
        *len += entries.len() as u64;
        runs.push(Run::File(run_path));
        Ok(())
    }
}

enum Run {
    Memory(Vec<(NGram, GramStats)>),
    File(PathBuf),
}

/// A finished vocabulary held as sorted runs, possibly on disk.
pub struct ExternalVocab {
    n: usize,
    classes: usize,
    len: u64,
    runs: Vec<Run>,
    _area: Option<SpillArea>,
    peak_entries: usize,
    apps: usize,
}

impl ExternalVocab {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apps(&self) -> usize {
        self.apps
    }

    /// Whether any entries were written to disk.
    pub fn spilled(&self) -> bool {
        self._area.is_some()
    }

    /// The largest number of distinct grams resident in memory at any point.
    pub fn peak_entries(&self) -> usize {
        self.peak_entries
    }

    /// Entries in ascending gram order.
    pub fn iter(&self) -> Result<MergeIter<'_>> {
        let codec = Codec {
            n: self.n,
            classes: self.classes,
        };
        let mut sources = Vec::with_capacity(self.runs.len());
        for run in &self.runs {
            sources.push(match run {
                Run::Memory(v) => Source::Memory(v.iter()),
                Run::File(p) => Source::File(open(p)?, p.clone()),
            });
        }
        let mut it = MergeIter {
            codec,
            heads: vec![None; sources.len()],
            sources,
            heap: BinaryHeap::new(),
            buf: Vec::new(),
        };
        for i in 0..it.sources.len() {
            it.advance(i)?;
        }
        Ok(it)
    }

    /// Materializes the vocabulary. Only sensible when it fits in memory.
    pub fn to_vocabulary(&self) -> Result<Vocabulary> {
        let mut entries = Vec::with_capacity(self.len as usize);
        for item in self.iter()? {
            let (g, s) = item?;
            let df = s.doc_freq();
            entries.push((g, df, s.total_freq));
        }
        Vocabulary::from_entries(self.n, entries)
    }

    /// Streams `hex<TAB>doc_freq<TAB>total_freq` lines, same layout as
    /// [`Vocabulary::write_tsv`].
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> Result<()> {
        let io_err = |e| Error::io("<vocab sink>", e);
        writeln!(sink, "# n={}", self.n).map_err(io_err)?;
        for item in self.iter()? {
            let (g, s) = item?;
            writeln!(sink, "{}\t{}\t{}", g.to_hex(), s.doc_freq(), s.total_freq).map_err(io_err)?;
        }
        sink.flush().map_err(io_err)
    }
}

enum Source<'a> {
    Memory(std::slice::Iter<'a, (NGram, GramStats)>),
    File(BufReader<File>, PathBuf),
}

pub struct MergeIter<'a> {
    codec: Codec,
    sources: Vec<Source<'a>>,
    heads: Vec<Option<GramStats>>,
    heap: BinaryHeap<Reverse<(NGram, usize)>>,
    buf: Vec<u8>,
}

impl MergeIter<'_> {
    fn advance(&mut self, i: usize) -> Result<()> {
        let next = match &mut self.sources[i] {
            Source::Memory(it) => it.next().cloned(),
            Source::File(r, p) => self.codec.read(r, &mut self.buf).map_err(|e| Error::io(p.as_path(), e))?,
        };
        if let Some((g, s)) = next {
            self.heads[i] = Some(s);
            self.heap.push(Reverse((g, i)));
        }
        Ok(())
    }
}

impl Iterator for MergeIter<'_> {
    type Item = Result<(NGram, GramStats)>;

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse((gram, i)) = self.heap.pop()?;
        let stats = self.heads[i].take().expect("head present for queued source");
        if let Err(e) = self.advance(i) {
            return Some(Err(e));
        }
        Some(Ok((gram, stats)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::OpcodeSeq;
    use crate::ngram::build_vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_corpus(apps: usize, len: usize, alphabet: u8, seed: u64) -> Vec<AppRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..apps)
            .map(|a| {
                let methods = (0..3)
                    .map(|m| {
                        let ops = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
                        OpcodeSeq::new(format!("LC{m};"), "f()V", ops)
                    })
                    .collect();
                AppRecord::new(format!("app{a:03}"), methods).unwrap()
            })
            .collect()
    }

    #[test]
    fn spilled_build_matches_in_memory() {
        let corpus = random_corpus(30, 60, 12, 7);
        let expected = build_vocabulary(&corpus, 3);
        assert!(expected.len() > 200);
        let config = SpillConfig {
            max_entries: 50,
            buckets: 3,
            dir: None,
        };
        let mut b = ExternalVocabBuilder::new(3, 1, config).unwrap();
        b.add_apps(&corpus, &vec![0; corpus.len()]).unwrap();
        let ext = b.finish().unwrap();
        assert!(ext.spilled());
        assert!(ext.peak_entries() <= 50);
        assert_eq!(ext.len() as usize, expected.len());
        assert_eq!(ext.to_vocabulary().unwrap(), expected);
    }

    #[test]
    fn unspilled_build_matches_in_memory() {
        let corpus = random_corpus(5, 20, 8, 1);
        let mut b = ExternalVocabBuilder::new(2, 2, SpillConfig::default()).unwrap();
        for (i, a) in corpus.iter().enumerate() {
            b.add_app(a, i % 2).unwrap();
        }
        let ext = b.finish().unwrap();
        assert!(!ext.spilled());
        assert_eq!(ext.to_vocabulary().unwrap(), build_vocabulary(&corpus, 2));
        for item in ext.iter().unwrap() {
            let (_, s) = item.unwrap();
            assert!(s.doc_freq() <= 5);
            assert!(s.total_freq >= s.doc_freq());
        }
    }

    #[test]
    fn tsv_matches_in_memory_writer() {
        let corpus = random_corpus(8, 30, 6, 3);
        let mut b = ExternalVocabBuilder::new(
            2,
            1,
            SpillConfig {
                max_entries: 5,
                buckets: 2,
                dir: None,
            },
        )
        .unwrap();
        b.add_apps(&corpus, &vec![0; corpus.len()]).unwrap();
        let ext = b.finish().unwrap();
        let mut a = Vec::new();
        ext.write_tsv(&mut a).unwrap();
        let mut b2 = Vec::new();
        build_vocabulary(&corpus, 2).write_tsv(&mut b2).unwrap();
        assert_eq!(a, b2);
    }
}
