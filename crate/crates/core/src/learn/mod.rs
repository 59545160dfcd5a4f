//! Built-in classifiers: naive Bayes, linear SVM and random forest.

mod forest;
mod nb;
mod spec;
mod svm;

pub use forest::Forest;
pub use nb::NaiveBayes;
pub use spec::{ClassifierSpec, ForestParams, MaxFeatures, NbParams, NbVariant, SvmParams};
pub use svm::LinearSvm;

use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::ngram::{FeatureMode, SparseVector};

#[derive(Debug, Clone)]
enum Learned {
    NaiveBayes(NaiveBayes),
    Svm(LinearSvm),
    Forest(Forest),
}

/// A trained classifier. Immutable; prediction is a pure function of the
/// model and the input vector.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ClassifierSpec,
    label_set: Vec<String>,
    vocab_size: usize,
    mode: FeatureMode,
    learned: Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label_index: usize,
    pub label: String,
    /// One score per label in `label_set` order. Posterior probabilities for
    /// naive Bayes and forests, margins for the SVM.
    pub scores: Vec<f64>,
}

/// Index of the first maximum, so ties go to the earlier label.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn train(ds: &LabeledDataset, spec: &ClassifierSpec) -> Result<Model> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let present_classes = ds.class_counts().iter().filter(|&&c| c > 0).count();
    let learned = match spec {
        ClassifierSpec::NaiveBayes(p) => Learned::NaiveBayes(NaiveBayes::fit(ds, p)?),
        ClassifierSpec::LinearSvm(p) => {
            if present_classes < 2 {
                return Err(Error::SingleClass);
            }
            Learned::Svm(LinearSvm::fit(ds, p))
        }
        ClassifierSpec::RandomForest(p) => {
            if present_classes < 2 {
                return Err(Error::SingleClass);
            }
            Learned::Forest(Forest::fit(ds, p))
        }
    };
    Ok(Model {
        spec: spec.clone(),
        label_set: ds.label_set().to_vec(),
        vocab_size: ds.num_features(),
        mode: ds.mode(),
        learned,
    })
}

impl Model {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn predict(&self, v: &SparseVector) -> Result<Prediction> {
        if let Some(max) = v.max_index() {
            if max as usize >= self.vocab_size {
                return Err(Error::DimensionMismatch {
                    index: max as usize,
                    vocab_size: self.vocab_size,
                });
            }
        }
        let scores = match &self.learned {
            Learned::NaiveBayes(nb) => nb.posterior(v)?,
            Learned::Svm(svm) => svm.margins(v.pairs().iter().map(|&(i, x)| (i, x as f64))),
            Learned::Forest(f) => f.proba(v),
        };
        let label_index = argmax(&scores);
        Ok(Prediction {
            label_index,
            label: self.label_set[label_index].clone(),
            scores,
        })
    }

    /// The underlying SVM, if this is one.
    pub fn as_svm(&self) -> Option<&LinearSvm> {
        match &self.learned {
            Learned::Svm(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_naive_bayes(&self) -> Option<&NaiveBayes> {
        match &self.learned {
            Learned::NaiveBayes(nb) => Some(nb),
            _ => None,
        }
    }
}
