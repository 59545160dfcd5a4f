//! One-vs-rest linear SVM trained with Pegasos (stochastic subgradient
//! descent on the regularized hinge loss).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::SvmParams;
use crate::dataset::LabeledDataset;

#[derive(Debug, Clone)]
pub struct LinearSvm {
    features: usize,
    normalize: bool,
    /// One weight vector per class, `features + 1` long; the last entry
    /// multiplies the constant bias input.
    weights: Vec<Vec<f64>>,
}

type Row = Vec<(u32, f64)>;

fn prepare(pairs: impl Iterator<Item = (u32, f64)>, normalize: bool) -> Row {
    let mut row: Row = pairs.collect();
    if normalize {
        let norm = row.iter().map(|&(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in row.iter_mut() {
                *x /= norm;
            }
        }
    }
    row
}

/// `w = scale * v`, with the squared norm of `w` tracked incrementally.
struct Scaled {
    scale: f64,
    v: Vec<f64>,
    sq_norm: f64,
}

impl Scaled {
    fn dot(&self, row: &Row, bias: usize) -> f64 {
        let s: f64 = row.iter().map(|&(i, x)| self.v[i as usize] * x).sum::<f64>() + self.v[bias];
        self.scale * s
    }

    fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            self.v.iter_mut().for_each(|x| *x = 0.0);
            self.scale = 1.0;
            self.sq_norm = 0.0;
            return;
        }
        self.scale *= factor;
        self.sq_norm *= factor * factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|x| *x *= s);
            self.scale = 1.0;
        }
    }

    fn add(&mut self, row: &Row, bias: usize, coef: f64) {
        let a = coef / self.scale;
        let mut delta = 0.0;
        for &(i, x) in row.iter().chain(std::iter::once(&(bias as u32, 1.0))) {
            let old = self.v[i as usize];
            delta += 2.0 * a * old * x + a * a * x * x;
            self.v[i as usize] = old + a * x;
        }
        self.sq_norm += self.scale * self.scale * delta;
        if self.sq_norm < 0.0 {
            self.sq_norm = 0.0;
        }
    }

    fn into_weights(self) -> Vec<f64> {
        let s = self.scale;
        self.v.into_iter().map(|x| x * s).collect()
    }
}

fn train_binary(rows: &[Row], ys: &[f64], features: usize, params: &SvmParams, seed: u64) -> Vec<f64> {
    let bias = features;
    let mut w = Scaled {
        scale: 1.0,
        v: vec![0.0; features + 1],
        sq_norm: 0.0,
    };
    let radius = 1.0 / params.lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let margin = ys[i] * w.dot(&rows[i], bias);
            w.shrink(1.0 - eta * params.lambda);
            if margin < 1.0 {
                w.add(&rows[i], bias, eta * ys[i]);
            }
            let norm = w.sq_norm.sqrt();
            if norm > radius {
                w.shrink(radius / norm);
            }
        }
    }
    w.into_weights()
}

impl LinearSvm {
    pub(crate) fn fit(ds: &LabeledDataset, params: &SvmParams) -> Self {
        let features = ds.num_features();
        let rows: Vec<Row> = ds
            .rows()
            .iter()
            .map(|(_, v)| prepare(v.pairs().iter().map(|&(i, x)| (i, x as f64)), params.normalize))
            .collect();
        let targets = ds.targets();
        let weights = (0..ds.label_set().len())
            .into_par_iter()
            .map(|c| {
                let ys: Vec<f64> = targets.iter().map(|&t| if t == c { 1.0 } else { -1.0 }).collect();
                let seed = params.seed.wrapping_add((c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                train_binary(&rows, &ys, features, params, seed)
            })
            .collect();
        LinearSvm {
            features,
            normalize: params.normalize,
            weights,
        }
    }

    /// Per-class decision values `w_c . x + b_c`.
    pub fn margins(&self, pairs: impl Iterator<Item = (u32, f64)>) -> Vec<f64> {
        let row = prepare(pairs, self.normalize);
        self.weights
            .iter()
            .map(|w| row.iter().map(|&(i, x)| w[i as usize] * x).sum::<f64>() + w[self.features])
            .collect()
    }

    /// Per-class `w_c . x` without the bias term.
    pub fn linear_margins(&self, pairs: impl Iterator<Item = (u32, f64)>) -> Vec<f64> {
        let row = prepare(pairs, self.normalize);
        self.weights
            .iter()
            .map(|w| row.iter().map(|&(i, x)| w[i as usize] * x).sum::<f64>())
            .collect()
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.weights[class][self.features]
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class][..self.features]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::{app, small};
    use crate::learn::train;
    use crate::ngram::FeatureMode;

    #[test]
    fn negated_input_flips_linear_score() {
        let ds = small(FeatureMode::Frequency);
        let m = train(&ds, &"svm".parse().unwrap()).unwrap();
        let svm = m.as_svm().unwrap();
        for (_, v) in ds.rows() {
            let pos = svm.linear_margins(v.pairs().iter().map(|&(i, x)| (i, x as f64)));
            let neg = svm.linear_margins(v.pairs().iter().map(|&(i, x)| (i, -(x as f64))));
            for (p, n) in pos.iter().zip(&neg) {
                assert!((p + n).abs() < 1e-9);
                if p.abs() > 1e-12 {
                    assert_ne!(p.signum(), n.signum());
                }
            }
        }
    }

    #[test]
    fn separable_data_fits_with_defaults() {
        // Three classes, each marked by its own opcode among shared noise.
        let mut apps = Vec::new();
        for (c, marker) in [(0u8, 0x6e), (1, 0x12), (2, 0x0e)] {
            for i in 0..15u8 {
                let noise = [0x01 + (i % 5), 0x07 + (i % 3)];
                apps.push(app(
                    &format!("c{c}_{i}"),
                    &format!("class{c}"),
                    &[&[noise[0], marker, noise[1]], &[noise[1]]],
                ));
            }
        }
        for mode in [FeatureMode::Binary, FeatureMode::Frequency] {
            let ds = LabeledDataset::from_corpus(&apps, 1, mode).unwrap();
            let m = train(&ds, &"svm".parse().unwrap()).unwrap();
            for ((_, v), &t) in ds.rows().iter().zip(ds.targets()) {
                assert_eq!(m.predict(v).unwrap().label_index, t);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = small(FeatureMode::Binary);
        let a = train(&ds, &"svm:seed=3".parse().unwrap()).unwrap();
        let b = train(&ds, &"svm:seed=3".parse().unwrap()).unwrap();
        assert_eq!(a.as_svm().unwrap().weights, b.as_svm().unwrap().weights);
    }
}
