//! Directory layout: `vocab.tsv`, `rows.tsv` and `labels.csv`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, open_read};
use crate::ingest::{read_labels, write_labels};
use crate::ngram::{FeatureMode, SparseVector, Vocabulary};

pub fn write_dataset(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    atomic_write(&dir.join("vocab.tsv"), |w| ds.vocab().write_tsv(w))?;
    atomic_write(&dir.join("rows.tsv"), |w| {
        writeln!(w, "# mode={}", ds.mode())?;
        writeln!(w, "# labels={}", ds.label_set().join(","))?;
        for (id, v) in ds.rows() {
            let pairs: Vec<String> = v.pairs().iter().map(|(i, x)| format!("{i}:{x}")).collect();
            writeln!(w, "{id}\t{}", pairs.join(" "))?;
        }
        Ok(())
    })?;
    atomic_write(&dir.join("labels.csv"), |w| {
        write_labels(
            ds.rows().iter().map(|(id, _)| (id.as_str(), ds.labels()[id].as_str())),
            w,
        )
    })
}

pub fn read_dataset(dir: &Path) -> Result<LabeledDataset> {
    let vocab = Vocabulary::read_tsv(open_read(&dir.join("vocab.tsv"))?)?;
    let labels: BTreeMap<String, String> = read_labels(open_read(&dir.join("labels.csv"))?)?
        .into_iter()
        .map(|r| (r.app_id, r.label))
        .collect();

    let mut mode = None;
    let mut label_set = None;
    let mut rows = Vec::new();
    for (i, line) in open_read(&dir.join("rows.tsv"))?.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::format(line_no, e.to_string()))?;
        if let Some(m) = line.strip_prefix("# mode=") {
            mode = Some(m.parse::<FeatureMode>()?);
            continue;
        }
        if let Some(l) = line.strip_prefix("# labels=") {
            label_set = Some(l.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect());
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mode = mode.ok_or_else(|| Error::format(line_no, "rows.tsv lacks a `# mode=` header"))?;
        let (id, rest) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        let pairs = rest
            .split_whitespace()
            .map(|tok| {
                let (i, v) = tok
                    .split_once(':')
                    .ok_or_else(|| Error::format(line_no, format!("bad pair `{tok}`")))?;
                let i = i.parse().map_err(|_| Error::format(line_no, "bad index"))?;
                let v = v.parse().map_err(|_| Error::format(line_no, "bad value"))?;
                Ok((i, v))
            })
            .collect::<Result<Vec<(u32, u32)>>>()?;
        if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::format(line_no, "indices not strictly ascending"));
        }
        rows.push((id.to_string(), SparseVector::from_pairs(pairs, mode)?));
    }
    let mode = mode.unwrap_or(FeatureMode::Binary);
    LabeledDataset::new(vocab, mode, rows, labels, label_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::small;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for mode in [FeatureMode::Binary, FeatureMode::Frequency] {
            let ds = small(mode);
            write_dataset(&ds, dir.path()).unwrap();
            assert_eq!(read_dataset(dir.path()).unwrap(), ds);
        }
    }
}
