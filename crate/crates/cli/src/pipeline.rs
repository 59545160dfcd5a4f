//! Input loading, dataset caching and shared helpers for the subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nopcode_core::dataset::{project, read_dataset, write_dataset, LabeledDataset};
use nopcode_core::fsutil::{atomic_write, open_read};
use nopcode_core::ig::{rank, select, Discretizer, SelectionRule};
use nopcode_core::ingest::{read_labels, read_opseq, AppRecord};
use nopcode_core::learn::ClassifierSpec;
use nopcode_core::ngram::FeatureMode;

use crate::args::{Settings, Task};
use crate::provenance::{file_digest, provenance, sha256_hex, Provenance};
use crate::InputError;

/// Resolved settings plus the provenance of this run.
pub struct Ctx {
    pub settings: Settings,
    pub specs: Vec<ClassifierSpec>,
    pub prov: Provenance,
    digests: BTreeMap<&'static str, String>,
}

/// Which input files a command reads.
#[derive(Clone, Copy)]
pub struct Needs {
    pub opseq: bool,
    pub labels: bool,
}

fn existing(path: Option<&PathBuf>, flag: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| InputError(format!("--{flag} is required for this command")))?;
    if !p.is_file() {
        return Err(InputError(format!("--{flag}: {} does not exist or is not a file", p.display())).into());
    }
    Ok(p.clone())
}

/// Splits a classifier list on commas that start a new spec, so
/// `nb,rf:trees=5,seed=2` is two specs.
pub fn split_specs(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match out.last_mut() {
            Some(prev) if part.contains('=') && !part.contains(':') => {
                prev.push(',');
                prev.push_str(part);
            }
            _ => out.push(part.to_string()),
        }
    }
    out
}

impl Ctx {
    pub fn new(settings: Settings, needs: Needs) -> Result<Self> {
        Self::with_inputs(settings, needs, Vec::new())
    }

    /// Like [`Ctx::new`], with extra `(role, digest)` pairs mixed into the
    /// config hash.
    pub fn with_inputs(settings: Settings, needs: Needs, extra: Vec<(String, String)>) -> Result<Self> {
        let specs = split_specs(&settings.classifiers)
            .iter()
            .map(|s| ClassifierSpec::parse_with_seed(s, settings.seed))
            .collect::<nopcode_core::Result<Vec<_>>>()?;
        if specs.is_empty() {
            return Err(InputError("--classifiers lists no classifier".into()).into());
        }
        if settings.k_folds < 2 {
            return Err(InputError("--k-folds must be at least 2".into()).into());
        }
        if settings.mem_budget == 0 || settings.shard_size == 0 {
            return Err(InputError("--mem-budget and --shard-size must be positive".into()).into());
        }
        for &n in &settings.n.0 {
            if n > 10 {
                log::warn!("n={n} is outside the usual 1..10 range");
            }
        }
        let mut digests = BTreeMap::new();
        if needs.opseq {
            let p = existing(settings.opseq.as_ref(), "opseq")?;
            digests.insert("opseq", file_digest(&p).with_context(|| format!("reading {}", p.display()))?);
        }
        if needs.labels {
            let p = existing(settings.labels.as_ref(), "labels")?;
            digests.insert("labels", file_digest(&p).with_context(|| format!("reading {}", p.display()))?);
        }
        let mut inputs: Vec<(String, String)> = digests.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        inputs.extend(extra);
        let names: Vec<String> = specs.iter().map(ToString::to_string).collect();
        let prov = provenance(&settings, &names, &inputs);
        Ok(Ctx {
            settings,
            specs,
            prov,
            digests,
        })
    }

    pub fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.settings.out.join(rel)
    }

    pub fn rule(&self) -> SelectionRule {
        match self.settings.select_top {
            Some(k) => SelectionRule::TopK(k),
            None => SelectionRule::Threshold(self.settings.ig_threshold),
        }
    }

    pub fn apps(&self) -> Result<Vec<AppRecord>> {
        let path = self.settings.opseq.as_ref().expect("opseq checked in Ctx::new");
        let apps = read_opseq(open_read(path)?).with_context(|| format!("reading {}", path.display()))?;
        Ok(apps)
    }

    /// Apps with labels attached for the current task. For `mt`, apps whose
    /// label row has no family are left out.
    pub fn labeled_apps(&self) -> Result<Vec<AppRecord>> {
        let apps = self.apps()?;
        let path = self.settings.labels.as_ref().expect("labels checked in Ctx::new");
        let rows = read_labels(open_read(path)?).with_context(|| format!("reading {}", path.display()))?;
        let by_id: BTreeMap<&str, _> = rows.iter().map(|r| (r.app_id.as_str(), r)).collect();
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(apps.len());
        let mut skipped = 0;
        for mut app in apps {
            let Some(row) = by_id.get(app.app_id.as_str()) else {
                missing.push(app.app_id.clone());
                continue;
            };
            let label = match self.settings.task {
                Task::Mc => Some(row.label.clone()),
                Task::Mt => row.family.clone(),
            };
            match label {
                Some(l) => {
                    app.label = Some(l);
                    out.push(app);
                }
                None => skipped += 1,
            }
        }
        if !missing.is_empty() {
            return Err(nopcode_core::Error::MissingLabels(missing).into());
        }
        if skipped > 0 {
            log::info!("task mt: {skipped} app(s) without a family left out");
        }
        if out.is_empty() {
            return Err(InputError("no labelled apps to work with".into()).into());
        }
        Ok(out)
    }

    fn cache_key(&self, n: usize, mode: FeatureMode) -> String {
        let key = format!(
            "{}|{}|{}|{}|{}|{}",
            crate::provenance::TOOL_VERSION,
            self.digests.get("opseq").map_or("", String::as_str),
            self.digests.get("labels").map_or("", String::as_str),
            self.settings.task.as_str(),
            n,
            mode
        );
        sha256_hex(key.as_bytes())
    }

    /// The labelled dataset for `(n, mode)`, from the on-disk cache when its
    /// key matches the current inputs.
    pub fn dataset(&self, apps: &[AppRecord], n: usize, mode: FeatureMode) -> Result<LabeledDataset> {
        let dir = self.out(format!("cache/n{n}_{mode}"));
        let key_path = dir.join("key");
        let key = self.cache_key(n, mode);
        if std::fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == key) {
            match read_dataset(&dir) {
                Ok(ds) => {
                    log::debug!("cache hit for n={n} {mode}");
                    return Ok(ds);
                }
                Err(e) => log::warn!("ignoring unreadable cache {}: {e}", dir.display()),
            }
        }
        let ds = match mode {
            FeatureMode::Frequency => LabeledDataset::from_corpus(apps, n, mode)?,
            FeatureMode::Binary => self.dataset(apps, n, FeatureMode::Frequency)?.to_binary(),
        };
        write_dataset(&ds, &dir)?;
        atomic_write(&key_path, |w| writeln!(w, "{key}"))?;
        Ok(ds)
    }

    /// Binning 0/1 values puts every row in one bucket, so binary datasets
    /// always use presence gain.
    pub fn discretizer_for(&self, mode: FeatureMode) -> Discretizer {
        match mode {
            FeatureMode::Binary => Discretizer::Presence,
            FeatureMode::Frequency => self.settings.discretizer,
        }
    }

    /// Whole-dataset IG selection unless `--no-select`.
    pub fn maybe_select(&self, ds: LabeledDataset) -> LabeledDataset {
        if self.settings.no_select {
            return ds;
        }
        let ranked = rank(&ds, self.discretizer_for(ds.mode()), self.settings.shard_size);
        let keep: BTreeSet<usize> = select(&ranked, self.rule());
        project(&ds, &keep)
    }

    /// Writes a text artifact whose first line is the provenance comment.
    pub fn write_text<F>(&self, path: &Path, marker: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<&mut std::fs::File>) -> std::io::Result<()>,
    {
        let line = format!("{marker} {}", self.prov.line());
        atomic_write(path, |w| {
            writeln!(w, "{line}")?;
            body(w)
        })
        .with_context(|| format!("writing {}", path.display()))
    }

    /// File-name stems for the classifier specs, unique within this run.
    pub fn spec_names(&self) -> Vec<String> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.specs {
            *counts.entry(s.short_name()).or_default() += 1;
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        self.specs
            .iter()
            .map(|s| {
                let short = s.short_name();
                if counts[short] == 1 {
                    short.to_string()
                } else {
                    let i = seen.entry(short).or_default();
                    *i += 1;
                    format!("{short}{i}")
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_lists_split_on_new_kinds() {
        assert_eq!(split_specs("nb,svm,rf"), ["nb", "svm", "rf"]);
        assert_eq!(
            split_specs("nb:alpha=0.5,rf:trees=5,seed=2, svm"),
            ["nb:alpha=0.5", "rf:trees=5,seed=2", "svm"]
        );
    }
}
