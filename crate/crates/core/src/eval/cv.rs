use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{weighted_metrics, ConfusionMatrix, Metrics};
use crate::dataset::{project, stratified_folds, LabeledDataset};
use crate::error::Result;
use crate::ig::{rank, select, Discretizer, SelectionRule};
use crate::learn::{train, ClassifierSpec};

/// Feature selection run on each training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldSelection {
    pub rule: SelectionRule,
    pub discretizer: Discretizer,
    pub shard_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Features kept by in-fold selection, if any ran.
    pub selected_features: Option<usize>,
    pub confusion: ConfusionMatrix,
    pub select_seconds: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub spec: String,
    pub k: usize,
    pub seed: u64,
    pub num_features: usize,
    pub folds: Vec<FoldReport>,
    pub aggregate: ConfusionMatrix,
    pub metrics: Metrics,
}

impl CvReport {
    pub fn train_seconds(&self) -> f64 {
        self.folds.iter().map(|f| f.train_seconds).sum()
    }

    pub fn predict_seconds(&self) -> f64 {
        self.folds.iter().map(|f| f.predict_seconds).sum()
    }
}

fn run_fold(
    ds: &LabeledDataset,
    spec: &ClassifierSpec,
    index: usize,
    train_rows: &[usize],
    test_rows: &[usize],
    selection: Option<&FoldSelection>,
) -> Result<FoldReport> {
    let mut train_ds = ds.subset_rows(train_rows);
    let mut test_ds = ds.subset_rows(test_rows);
    let started = Instant::now();
    let selected_features = match selection {
        Some(sel) => {
            let ranked = rank(&train_ds, sel.discretizer, sel.shard_size);
            let keep = select(&ranked, sel.rule);
            train_ds = project(&train_ds, &keep);
            test_ds = project(&test_ds, &keep);
            Some(keep.len())
        }
        None => None,
    };
    let select_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let model = train(&train_ds, spec)?;
    let train_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut confusion = ConfusionMatrix::new(ds.label_set().to_vec());
    for ((_, v), &truth) in test_ds.rows().iter().zip(test_ds.targets()) {
        confusion.record(truth, model.predict(v)?.label_index);
    }
    let predict_seconds = started.elapsed().as_secs_f64();

    Ok(FoldReport {
        fold: index,
        train_size: train_rows.len(),
        test_size: test_rows.len(),
        selected_features,
        confusion,
        select_seconds,
        train_seconds,
        predict_seconds,
    })
}

/// Stratified k-fold cross-validation. Folds run in parallel; every result
/// except the timings depends only on the inputs and `seed`.
pub fn cross_validate(
    ds: &LabeledDataset,
    spec: &ClassifierSpec,
    k: usize,
    seed: u64,
    selection: Option<&FoldSelection>,
) -> Result<CvReport> {
    spec.validate()?;
    let folds = stratified_folds(ds, k, seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(ds, spec, i, &f.train, &f.test, selection))
        .collect::<Result<Vec<_>>>()?;
    let mut aggregate = ConfusionMatrix::new(ds.label_set().to_vec());
    for r in &reports {
        aggregate.add(&r.confusion);
    }
    let metrics = weighted_metrics(&aggregate)?;
    Ok(CvReport {
        spec: spec.to_string(),
        k,
        seed,
        num_features: ds.num_features(),
        folds: reports,
        aggregate,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub spec: String,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

/// Wall-clock cost of training on each whole dataset and then predicting
/// every one of its rows. Runs sequentially so jobs don't share cores.
pub fn benchmark(datasets: &[(usize, &LabeledDataset)], specs: &[ClassifierSpec]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(datasets.len() * specs.len());
    for &(n, ds) in datasets {
        for spec in specs {
            let started = Instant::now();
            let model = train(ds, spec)?;
            let train_seconds = started.elapsed().as_secs_f64();
            let started = Instant::now();
            for (_, v) in ds.rows() {
                model.predict(v)?;
            }
            let predict_seconds = started.elapsed().as_secs_f64();
            rows.push(BenchRow {
                n,
                spec: spec.to_string(),
                train_seconds,
                predict_seconds,
            });
        }
    }
    Ok(rows)
}
