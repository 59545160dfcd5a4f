use std::collections::BTreeMap;
use std::io::Write;

use anyhow::Result;
use nopcode_core::dataset::LabeledDataset;
use nopcode_core::eval::{cross_validate, ClassMetrics, ConfusionMatrix, CvReport, FoldSelection};
use nopcode_core::learn::ClassifierSpec;
use nopcode_core::ngram::FeatureMode;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::Settings;
use crate::pipeline::{Ctx, Needs};

#[derive(Serialize)]
struct Weighted {
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Serialize)]
struct FoldDoc<'a> {
    fold: usize,
    train_size: usize,
    test_size: usize,
    selected_features: Option<usize>,
    confusion: &'a [Vec<u64>],
}

#[derive(Serialize)]
struct FoldTiming {
    fold: usize,
    select_seconds: f64,
    train_seconds: f64,
    predict_seconds: f64,
}

#[derive(Serialize)]
struct Timing {
    train_seconds: f64,
    predict_seconds: f64,
    per_fold: Vec<FoldTiming>,
}

#[derive(Serialize)]
struct Selection {
    rule: String,
    discretizer: String,
}

/// Everything outside `timing` is a function of the inputs and the seed.
#[derive(Serialize)]
struct ReportDoc<'a> {
    tool_version: &'a str,
    config_hash: &'a str,
    seed: u64,
    task: &'a str,
    n: usize,
    mode: FeatureMode,
    classifier: String,
    classifier_params: &'a ClassifierSpec,
    protocol: &'a str,
    selection: Option<Selection>,
    k_folds: usize,
    apps: usize,
    features: usize,
    folds: Vec<FoldDoc<'a>>,
    aggregate: &'a ConfusionMatrix,
    per_class: &'a [ClassMetrics],
    weighted: Weighted,
    accuracy: f64,
    timing: Timing,
}

fn protocol(ctx: &Ctx) -> &'static str {
    if ctx.settings.no_select {
        "no_selection"
    } else if ctx.settings.paper_protocol {
        "whole_dataset_selection"
    } else {
        "in_fold_selection"
    }
}

fn doc<'a>(
    ctx: &'a Ctx,
    n: usize,
    mode: FeatureMode,
    spec: &'a ClassifierSpec,
    ds: &LabeledDataset,
    r: &'a CvReport,
) -> ReportDoc<'a> {
    ReportDoc {
        tool_version: ctx.prov.tool_version,
        config_hash: &ctx.prov.config_hash,
        seed: ctx.prov.seed,
        task: ctx.settings.task.as_str(),
        n,
        mode,
        classifier: spec.to_string(),
        classifier_params: spec,
        protocol: protocol(ctx),
        selection: (!ctx.settings.no_select).then(|| Selection {
            rule: ctx.rule().to_string(),
            discretizer: ctx.discretizer_for(mode).to_string(),
        }),
        k_folds: r.k,
        apps: ds.len(),
        features: r.num_features,
        folds: r
            .folds
            .iter()
            .map(|f| FoldDoc {
                fold: f.fold,
                train_size: f.train_size,
                test_size: f.test_size,
                selected_features: f.selected_features,
                confusion: f.confusion.counts(),
            })
            .collect(),
        aggregate: &r.aggregate,
        per_class: &r.metrics.per_class,
        weighted: Weighted {
            precision: r.metrics.weighted_precision,
            recall: r.metrics.weighted_recall,
            f1: r.metrics.weighted_f1,
        },
        accuracy: r.metrics.accuracy,
        timing: Timing {
            train_seconds: r.train_seconds(),
            predict_seconds: r.predict_seconds(),
            per_fold: r
                .folds
                .iter()
                .map(|f| FoldTiming {
                    fold: f.fold,
                    select_seconds: f.select_seconds,
                    train_seconds: f.train_seconds,
                    predict_seconds: f.predict_seconds,
                })
                .collect(),
        },
    }
}

fn write_tsv_report(w: &mut impl Write, d: &ReportDoc) -> std::io::Result<()> {
    writeln!(w, "task\t{}", d.task)?;
    writeln!(w, "n\t{}", d.n)?;
    writeln!(w, "mode\t{}", d.mode)?;
    writeln!(w, "classifier\t{}", d.classifier)?;
    writeln!(w, "protocol\t{}", d.protocol)?;
    writeln!(w, "k_folds\t{}", d.k_folds)?;
    writeln!(w, "apps\t{}", d.apps)?;
    writeln!(w, "features\t{}", d.features)?;
    writeln!(w, "weighted_precision\t{:.6}", d.weighted.precision)?;
    writeln!(w, "weighted_recall\t{:.6}", d.weighted.recall)?;
    writeln!(w, "weighted_f1\t{:.6}", d.weighted.f1)?;
    writeln!(w, "accuracy\t{:.6}", d.accuracy)?;
    writeln!(w, "train_seconds\t{:.6}", d.timing.train_seconds)?;
    writeln!(w, "predict_seconds\t{:.6}", d.timing.predict_seconds)?;
    writeln!(w)?;
    writeln!(w, "label\tsupport\tprecision\trecall\tf1\tprecision_undefined")?;
    for c in d.per_class {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            c.label, c.support, c.precision, c.recall, c.f1, c.precision_undefined
        )?;
    }
    writeln!(w)?;
    writeln!(w, "true\\predicted\t{}", d.aggregate.labels().join("\t"))?;
    for (label, row) in d.aggregate.labels().iter().zip(d.aggregate.counts()) {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(w, "{label}\t{}", cells.join("\t"))?;
    }
    Ok(())
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
    let names = ctx.spec_names();
    let modes = ctx.settings.mode.modes();

    let mut datasets: BTreeMap<(usize, FeatureMode), LabeledDataset> = BTreeMap::new();
    for &n in &ctx.settings.n.0 {
        for &mode in &modes {
            let ds = ctx.dataset(&apps, n, mode)?;
            let ds = if ctx.settings.paper_protocol { ctx.maybe_select(ds) } else { ds };
            datasets.insert((n, mode), ds);
        }
    }
    let in_fold = |mode| {
        (!ctx.settings.no_select && !ctx.settings.paper_protocol).then(|| FoldSelection {
            rule: ctx.rule(),
            discretizer: ctx.discretizer_for(mode),
            shard_size: ctx.settings.shard_size,
        })
    };

    let jobs: Vec<(usize, FeatureMode, usize)> = datasets
        .keys()
        .flat_map(|&(n, m)| (0..ctx.specs.len()).map(move |s| (n, m, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(n, m, s)| {
            cross_validate(
                &datasets[&(n, m)],
                &ctx.specs[s],
                ctx.settings.k_folds,
                ctx.settings.seed,
                in_fold(m).as_ref(),
            )
        })
        .collect::<nopcode_core::Result<Vec<_>>>()?;

    let mut f1: BTreeMap<(usize, String), f64> = BTreeMap::new();
    let mut long = Vec::new();
    for (&(n, mode, s), report) in jobs.iter().zip(&reports) {
        let spec = &ctx.specs[s];
        let d = doc(&ctx, n, mode, spec, &datasets[&(n, mode)], report);
        let stem = format!("evaluate/n{n}_{mode}_{}", names[s]);
        let json = serde_json::to_string_pretty(&d)?;
        nopcode_core::fsutil::atomic_write(&ctx.out(format!("{stem}.json")), |w| writeln!(w, "{json}"))?;
        ctx.write_text(&ctx.out(format!("{stem}.tsv")), "#", |w| write_tsv_report(w, &d))?;
        f1.insert((n, format!("{mode}:{}", names[s])), d.weighted.f1);
        long.push(format!(
            "{n}\t{mode}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            names[s], d.weighted.precision, d.weighted.recall, d.weighted.f1, d.accuracy
        ));
    }

    let columns: Vec<String> = modes
        .iter()
        .flat_map(|m| names.iter().map(move |c| format!("{m}:{c}")))
        .collect();
    let spec_line: Vec<String> = names.iter().zip(&ctx.specs).map(|(n, s)| format!("{n}={s}")).collect();
    let summary = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "# weighted f1; protocol={} classifiers: {}", protocol(&ctx), spec_line.join(" "))?;
        writeln!(w, "n\t{}", columns.join("\t"))?;
        for &n in &ctx.settings.n.0 {
            let cells: Vec<String> = columns.iter().map(|c| format!("{:.6}", f1[&(n, c.clone())])).collect();
            writeln!(w, "{n}\t{}", cells.join("\t"))?;
        }
        Ok(())
    };
    ctx.write_text(&ctx.out("evaluate/summary.tsv"), "#", |w| summary(w))?;
    ctx.write_text(&ctx.out("evaluate/metrics.tsv"), "#", |w| {
        writeln!(w, "n\tmode\tclassifier\tweighted_precision\tweighted_recall\tweighted_f1\taccuracy")?;
        for l in &long {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    summary(&mut std::io::stdout().lock())?;
    Ok(())
}
