//! extract, stats, vocab, featurize and export.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nopcode_core::dataset::{export_arff, export_csv};
use nopcode_core::fsutil::atomic_write;
use nopcode_core::ingest::{check_unique_ids, parse_smali_tree, write_opseq_with_header, AppRecord};
use nopcode_core::ngram::{ExternalVocab, ExternalVocabBuilder, SpillConfig};
use nopcode_core::opcode::load_opcode_table;
use rayon::prelude::*;

use crate::args::{ExportFormat, Settings};
use crate::pipeline::{Ctx, Needs};
use crate::provenance::sha256_hex;
use crate::InputError;

fn app_dirs(dirs: &[PathBuf], corpus: Option<&Path>) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(InputError(format!("{} is not a directory", d.display())).into());
        }
        out.push(d.clone());
    }
    if let Some(root) = corpus {
        let entries = std::fs::read_dir(root).map_err(|e| InputError(format!("{}: {e}", root.display())))?;
        let mut subs = BTreeSet::new();
        for entry in entries {
            let path = entry.with_context(|| format!("listing {}", root.display()))?.path();
            if path.is_dir() {
                subs.insert(path);
            }
        }
        out.extend(subs);
    }
    if out.is_empty() {
        return Err(InputError("no app directories given (pass directories or --corpus)".into()).into());
    }
    out.into_iter()
        .map(|p| {
            let id = p
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| InputError(format!("cannot derive an app id from {}", p.display())))?
                .to_string();
            Ok((id, p))
        })
        .collect()
}

pub fn extract(settings: Settings, dirs: &[PathBuf], corpus: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let apps_in = app_dirs(dirs, corpus)?;
    check_unique_ids(apps_in.iter().map(|(id, _)| id.as_str()))?;
    let mut ids: Vec<&str> = apps_in.iter().map(|(id, _)| id.as_str()).collect();
    ids.sort_unstable();
    let ctx = Ctx::with_inputs(
        settings,
        Needs {
            opseq: false,
            labels: false,
        },
        vec![("apps".into(), sha256_hex(ids.join("\n").as_bytes()))],
    )?;
    let table = load_opcode_table();
    let parsed: Vec<nopcode_core::Result<AppRecord>> = apps_in
        .par_iter()
        .map(|(id, dir)| parse_smali_tree(dir, id, table))
        .collect();
    let mut apps = Vec::with_capacity(parsed.len());
    for app in parsed {
        let app = app?;
        log::info!(
            "{}: {} methods, {} instructions",
            app.app_id,
            app.methods.len(),
            app.instruction_count()
        );
        apps.push(app);
    }
    let path = output.map_or_else(|| ctx.out("corpus.opseq"), Path::to_path_buf);
    atomic_write(&path, |w| write_opseq_with_header(&apps, &[ctx.prov.line()], w))?;
    println!("{}\t{} apps", path.display(), apps.len());
    Ok(())
}

fn spill_config(ctx: &Ctx) -> SpillConfig {
    SpillConfig {
        max_entries: ctx.settings.mem_budget,
        ..SpillConfig::default()
    }
}

/// Vocabulary of an unlabelled corpus (one tracked class).
fn unlabeled_vocab(ctx: &Ctx, apps: &[AppRecord], n: usize) -> Result<ExternalVocab> {
    let mut b = ExternalVocabBuilder::new(n, 1, spill_config(ctx))?;
    b.add_apps(apps, &vec![0; apps.len()])?;
    Ok(b.finish()?)
}

pub fn stats(settings: Settings) -> Result<()> {
    let ctx = Ctx::new(
        settings,
        Needs {
            opseq: true,
            labels: false,
        },
    )?;
    let apps = ctx.apps()?;
    let mut rows = Vec::new();
    for &n in &ctx.settings.n.0 {
        let v = unlabeled_vocab(&ctx, &apps, n)?;
        rows.push((n, v.len()));
    }
    let path = ctx.out("stats.tsv");
    ctx.write_text(&path, "#", |w| {
        writeln!(w, "n\tunique_count")?;
        for (n, c) in &rows {
            writeln!(w, "{n}\t{c}")?;
        }
        Ok(())
    })?;
    println!("n\tunique_count");
    for (n, c) in &rows {
        println!("{n}\t{c}");
    }
    Ok(())
}

pub fn vocab(settings: Settings) -> Result<()> {
    let ctx = Ctx::new(
        settings,
        Needs {
            opseq: true,
            labels: false,
        },
    )?;
    let apps = ctx.apps()?;
    for &n in &ctx.settings.n.0 {
        let v = unlabeled_vocab(&ctx, &apps, n)?;
        let path = ctx.out(format!("vocab/vocab_n{n}.tsv"));
        ctx.write_text(&path, "#", |w| v.write_tsv(&mut *w).map_err(std::io::Error::other))?;
        println!("{}\t{} grams", path.display(), v.len());
    }
    Ok(())
}

const LABELED: Needs = Needs {
    opseq: true,
    labels: true,
};

pub fn featurize(settings: Settings) -> Result<()> {
    let ctx = Ctx::new(settings, LABELED)?;
    let apps = ctx.labeled_apps()?;
    for &n in &ctx.settings.n.0 {
        for mode in ctx.settings.mode.modes() {
            let ds = ctx.dataset(&apps, n, mode)?;
            println!(
                "{}\t{} apps\t{} features",
                ctx.out(format!("cache/n{n}_{mode}")).display(),
                ds.len(),
                ds.num_features()
            );
        }
    }
    Ok(())
}

pub fn export(settings: Settings, format: ExportFormat) -> Result<()> {
    let ctx = Ctx::new(settings, LABELED)?;
    let apps = ctx.labeled_apps()?;
    for &n in &ctx.settings.n.0 {
        for mode in ctx.settings.mode.modes() {
            let ds = ctx.maybe_select(ctx.dataset(&apps, n, mode)?);
            let path = match format {
                ExportFormat::Arff => {
                    let path = ctx.out(format!("export/n{n}_{mode}.arff"));
                    let relation = format!("nopcode_{}_n{n}_{mode}", ctx.settings.task.as_str());
                    ctx.write_text(&path, "%", |w| export_arff(&ds, &relation, w))?;
                    path
                }
                ExportFormat::Csv => {
                    let path = ctx.out(format!("export/n{n}_{mode}.csv"));
                    ctx.write_text(&path, "#", |w| export_csv(&ds, w))?;
                    path
                }
            };
            println!("{}\t{} apps\t{} features", path.display(), ds.len(), ds.num_features());
        }
    }
    Ok(())
}
