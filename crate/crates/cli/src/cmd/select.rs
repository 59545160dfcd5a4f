use std::io::Write;

use anyhow::Result;
use nopcode_core::ig::{
    rank, rank_external, ranking_rows, select, top_table, write_ranking_tsv, write_selection, Discretizer,
    SelectionRule,
};
use nopcode_core::ingest::AppRecord;
use nopcode_core::ngram::{ExternalVocabBuilder, FeatureMode, NGram, SpillConfig};

use crate::args::Settings;
use crate::pipeline::{Ctx, Needs};

fn label_index(apps: &[AppRecord]) -> (Vec<String>, Vec<usize>) {
    let mut labels: Vec<String> = apps.iter().filter_map(|a| a.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let idx = apps
        .iter()
        .map(|a| labels.binary_search(a.label.as_ref().expect("labelled")).expect("known label"))
        .collect();
    (labels, idx)
}

struct Written {
    selected: u64,
}

/// Presence gain, streamed through the out-of-core vocabulary and ranking.
/// The gain ignores magnitudes, so binary and frequency share one ranking.
fn presence_select(ctx: &Ctx, apps: &[AppRecord], n: usize, modes: &[FeatureMode]) -> Result<Written> {
    let (labels, classes) = label_index(apps);
    let mut totals = vec![0u64; labels.len()];
    for &c in &classes {
        totals[c] += 1;
    }
    let config = SpillConfig {
        max_entries: ctx.settings.mem_budget,
        ..SpillConfig::default()
    };
    let mut builder = ExternalVocabBuilder::new(n, labels.len(), config)?;
    builder.add_apps(apps, &classes)?;
    let vocab = builder.finish()?;
    let ranking = rank_external(&vocab, &totals, ctx.settings.mem_budget, None)?;
    log::info!(
        "n={n}: {} grams ranked (peak {} vocabulary / {} ranking entries in memory)",
        ranking.len(),
        vocab.peak_entries(),
        ranking.peak_entries()
    );

    let mut subset: Vec<NGram> = Vec::new();
    let mut top = Vec::new();
    let rule = ctx.rule();
    for (i, row) in ranking.iter()?.enumerate() {
        let row = row?;
        let keep = match rule {
            SelectionRule::Threshold(t) => row.ig > t,
            SelectionRule::TopK(k) => i < k,
        };
        if i < ctx.settings.top_k {
            top.push(row.to_top_row(i + 1, &labels));
        }
        if !keep && i >= ctx.settings.top_k {
            break;
        }
        if keep {
            subset.push(row.gram);
        }
    }
    for mode in modes {
        let path = ctx.out(format!("select/ranking_n{n}_{mode}.tsv"));
        ctx.write_text(&path, "#", |w| {
            ranking.write_tsv(&labels, &mut *w).map_err(std::io::Error::other)
        })?;
        write_tables(ctx, n, *mode, &subset, &top, &labels)?;
    }
    Ok(Written {
        selected: subset.len() as u64,
    })
}

fn write_tables(
    ctx: &Ctx,
    n: usize,
    mode: FeatureMode,
    subset: &[NGram],
    top: &[nopcode_core::ig::TopRow],
    labels: &[String],
) -> Result<()> {
    ctx.write_text(&ctx.out(format!("select/subset_n{n}_{mode}.txt")), "#", |w| {
        write_selection(subset, w)
    })?;
    ctx.write_text(&ctx.out(format!("select/top_n{n}_{mode}.tsv")), "#", |w| {
        write_ranking_tsv(top, labels, w)
    })
}

/// Binned gain over the featurized dataset of each mode.
fn binned_select(ctx: &Ctx, apps: &[AppRecord], n: usize, mode: FeatureMode, disc: Discretizer) -> Result<Written> {
    let ds = ctx.dataset(apps, n, mode)?;
    let ranked = rank(&ds, disc, ctx.settings.shard_size);
    let keep = select(&ranked, ctx.rule());
    let subset: Vec<NGram> = ranked
        .scores
        .iter()
        .filter(|s| keep.contains(&s.feature_index))
        .map(|s| s.gram.clone())
        .collect();
    let rows = ranking_rows(&ranked, &ds);
    ctx.write_text(&ctx.out(format!("select/ranking_n{n}_{mode}.tsv")), "#", |w| {
        write_ranking_tsv(&rows, ds.label_set(), w)
    })?;
    let top = top_table(&ranked, &ds, ctx.settings.top_k);
    write_tables(ctx, n, mode, &subset, &top, ds.label_set())?;
    Ok(Written {
        selected: subset.len() as u64,
    })
}

pub fn run(settings: Settings) -> Result<()> {
    let ctx = Ctx::new(
        settings,
        Needs {
            opseq: true,
            labels: true,
        },
    )?;
    let apps = ctx.labeled_apps()?;
    let modes = ctx.settings.mode.modes();
    let mut counts: Vec<(usize, Vec<u64>)> = Vec::new();
    for &n in &ctx.settings.n.0 {
        let per_mode = match ctx.settings.discretizer {
            Discretizer::Presence => {
                let w = presence_select(&ctx, &apps, n, &modes)?;
                vec![w.selected; modes.len()]
            }
            _ => modes
                .iter()
                .map(|&m| binned_select(&ctx, &apps, n, m, ctx.discretizer_for(m)).map(|w| w.selected))
                .collect::<Result<Vec<_>>>()?,
        };
        counts.push((n, per_mode));
    }
    let header: Vec<&str> = modes.iter().map(|m| m.as_str()).collect();
    let path = ctx.out("select/selected_counts.tsv");
    ctx.write_text(&path, "#", |w| {
        writeln!(w, "# rule={} discretizer={}", ctx.rule(), ctx.settings.discretizer)?;
        writeln!(w, "n\t{}", header.join("\t"))?;
        for (n, c) in &counts {
            let cells: Vec<String> = c.iter().map(u64::to_string).collect();
            writeln!(w, "{n}\t{}", cells.join("\t"))?;
        }
        Ok(())
    })?;
    println!("n\t{}", header.join("\t"));
    for (n, c) in &counts {
        let cells: Vec<String> = c.iter().map(u64::to_string).collect();
        println!("{n}\t{}", cells.join("\t"));
    }
    Ok(())
}
