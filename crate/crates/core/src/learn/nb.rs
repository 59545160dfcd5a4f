//! Naive Bayes with additive smoothing.
//!
//! Bernoulli: `P(x_f=1 | c) = (docs_cf + a) / (N_c + 2a)`; absent features
//! contribute `log(1 - p)`. Multinomial: `P(f | c) = (count_cf + a) /
//! (total_c + a * V)`, weighted by the feature count. Class priors are the
//! empirical class frequencies.

use super::spec::{NbParams, NbVariant};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::ngram::{FeatureMode, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Bernoulli,
    Multinomial,
}

#[derive(Debug, Clone)]
pub struct NaiveBayes {
    kind: Kind,
    features: usize,
    /// Per-class constant term of the log joint.
    base: Vec<f64>,
    /// `[class * features + f]`: Bernoulli log-odds of presence, or
    /// multinomial log-probability of the feature.
    weights: Vec<f64>,
}

impl NaiveBayes {
    pub(crate) fn fit(ds: &LabeledDataset, params: &NbParams) -> Result<Self> {
        let kind = match (params.variant, ds.mode()) {
            (NbVariant::Auto, FeatureMode::Binary) | (NbVariant::Bernoulli, FeatureMode::Binary) => Kind::Bernoulli,
            (NbVariant::Bernoulli, FeatureMode::Frequency) => {
                return Err(Error::ModeMismatch("Bernoulli naive Bayes requires binary-mode data".into()))
            }
            (NbVariant::Auto, FeatureMode::Frequency) | (NbVariant::Multinomial, _) => Kind::Multinomial,
        };
        let classes = ds.label_set().len();
        let features = ds.num_features();
        let alpha = params.alpha;
        let class_counts = ds.class_counts();
        let n = ds.len() as f64;

        let mut sums = vec![0f64; classes * features];
        for ((_, v), &t) in ds.rows().iter().zip(ds.targets()) {
            for &(i, x) in v.pairs() {
                let add = match kind {
                    Kind::Bernoulli => 1.0,
                    Kind::Multinomial => x as f64,
                };
                sums[t * features + i as usize] += add;
            }
        }

        let mut base = Vec::with_capacity(classes);
        let mut weights = vec![0f64; classes * features];
        for c in 0..classes {
            let log_prior = (class_counts[c] as f64 / n).ln();
            let row = &sums[c * features..(c + 1) * features];
            let out = &mut weights[c * features..(c + 1) * features];
            match kind {
                Kind::Bernoulli => {
                    let denom = class_counts[c] as f64 + 2.0 * alpha;
                    let mut absent_sum = 0.0;
                    for (w, &d) in out.iter_mut().zip(row) {
                        let p = (d + alpha) / denom;
                        let log_absent = (1.0 - p).ln();
                        absent_sum += log_absent;
                        *w = p.ln() - log_absent;
                    }
                    base.push(log_prior + absent_sum);
                }
                Kind::Multinomial => {
                    let total: f64 = row.iter().sum();
                    let denom = total + alpha * features as f64;
                    for (w, &cnt) in out.iter_mut().zip(row) {
                        *w = ((cnt + alpha) / denom).ln();
                    }
                    base.push(log_prior);
                }
            }
        }
        Ok(NaiveBayes {
            kind,
            features,
            base,
            weights,
        })
    }

    pub fn is_bernoulli(&self) -> bool {
        self.kind == Kind::Bernoulli
    }

    /// Smoothed `P(feature present | class)` of a Bernoulli model.
    pub fn presence_probability(&self, class: usize, feature: usize) -> Option<f64> {
        if self.kind != Kind::Bernoulli {
            return None;
        }
        let odds = self.weights[class * self.features + feature].exp();
        Some(odds / (1.0 + odds))
    }

    /// Unnormalized log joint `log P(c) + log P(x | c)` per class.
    pub fn log_joint(&self, v: &SparseVector) -> Result<Vec<f64>> {
        if self.kind == Kind::Bernoulli && v.mode() != FeatureMode::Binary {
            return Err(Error::ModeMismatch("Bernoulli naive Bayes requires binary-mode vectors".into()));
        }
        Ok(self
            .base
            .iter()
            .enumerate()
            .map(|(c, &b)| {
                let w = &self.weights[c * self.features..(c + 1) * self.features];
                let evidence: f64 = match self.kind {
                    Kind::Bernoulli => v.pairs().iter().map(|&(i, _)| w[i as usize]).sum(),
                    Kind::Multinomial => v.pairs().iter().map(|&(i, x)| x as f64 * w[i as usize]).sum(),
                };
                b + evidence
            })
            .collect())
    }

    /// Posterior class probabilities, normalized with log-sum-exp.
    pub fn posterior(&self, v: &SparseVector) -> Result<Vec<f64>> {
        let joint = self.log_joint(v)?;
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = joint.iter().map(|&j| (j - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / z).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::app;
    use crate::learn::{train, ClassifierSpec};

    fn presence_dataset() -> LabeledDataset {
        // labels [M, M, B, B], presence of 0x6e [1, 1, 1, 0]
        let apps = [
            app("m1", "M", &[&[0x6e]]),
            app("m2", "M", &[&[0x6e]]),
            app("b1", "B", &[&[0x6e]]),
            app("b2", "B", &[&[0x0e]]),
        ];
        LabeledDataset::from_corpus(&apps, 1, FeatureMode::Binary).unwrap()
    }

    #[test]
    fn laplace_presence_probabilities() {
        let ds = presence_dataset();
        let model = train(&ds, &"nb".parse().unwrap()).unwrap();
        let nb = model.as_naive_bayes().unwrap();
        assert!(nb.is_bernoulli());
        let f = ds.vocab().index_of(&[0x6e]).unwrap();
        let m = ds.label_set().iter().position(|l| l == "M").unwrap();
        let b = ds.label_set().iter().position(|l| l == "B").unwrap();
        assert!((nb.presence_probability(m, f).unwrap() - 0.75).abs() < 1e-12);
        assert!((nb.presence_probability(b, f).unwrap() - 0.5).abs() < 1e-12);

        let present_only = SparseVector::from_pairs(vec![(f as u32, 1)], FeatureMode::Binary).unwrap();
        let joint = nb.log_joint(&present_only).unwrap();
        assert!(joint[m] > joint[b]);
    }

    #[test]
    fn bernoulli_rejects_frequency_data() {
        let ds = presence_dataset();
        let freq = LabeledDataset::from_corpus(
            &[app("a", "x", &[&[1, 1]]), app("b", "y", &[&[2]])],
            1,
            FeatureMode::Frequency,
        )
        .unwrap();
        let spec: ClassifierSpec = "nb:variant=bernoulli".parse().unwrap();
        assert!(matches!(train(&freq, &spec), Err(Error::ModeMismatch(_))));
        assert!(train(&ds, &spec).is_ok());
        let auto = train(&freq, &"nb".parse().unwrap()).unwrap();
        assert!(!auto.as_naive_bayes().unwrap().is_bernoulli());
    }

    #[test]
    fn empty_vector_follows_prior_for_multinomial() {
        let apps = [
            app("a", "x", &[&[1, 1]]),
            app("b", "x", &[&[1]]),
            app("c", "y", &[&[2]]),
        ];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
        let model = train(&ds, &"nb".parse().unwrap()).unwrap();
        let p = model.predict(&SparseVector::empty(FeatureMode::Frequency)).unwrap();
        assert_eq!(p.label, "x");
        assert!((p.scores[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_repeated_feature_keeps_ordering() {
        let apps = [
            app("a", "x", &[&[1, 1, 2]]),
            app("b", "y", &[&[2, 2, 1]]),
        ];
        let ds = LabeledDataset::from_corpus(&apps, 1, FeatureMode::Frequency).unwrap();
        let nb = train(&ds, &"nb".parse().unwrap()).unwrap();
        let nb = nb.as_naive_bayes().unwrap();
        let f = ds.vocab().index_of(&[1]).unwrap() as u32;
        let ratio = |k: u32| {
            let v = SparseVector::from_pairs(vec![(f, k)], FeatureMode::Frequency).unwrap();
            let j = nb.log_joint(&v).unwrap();
            j[0] - j[1]
        };
        let base = ratio(0);
        assert!(ratio(1) > base);
        for k in [2, 5, 40] {
            assert_eq!((ratio(k) - base).signum(), (ratio(1) - base).signum());
        }
    }
}
