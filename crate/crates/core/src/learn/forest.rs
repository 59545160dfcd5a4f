//! Random forest of CART trees split on Gini impurity.
//!
//! Splits test `x_f <= threshold` with thresholds at midpoints between
//! adjacent distinct values, so absent features (value 0) always go left of
//! any positive threshold.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::ForestParams;
use crate::dataset::LabeledDataset;
use crate::ngram::SparseVector;

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: u32,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, v: &SparseVector) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(dist) => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if v.get(*feature) as f64 <= *threshold { *left } else { *right };
                }
            }
        }
    }

    fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = self.nodes[at] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    classes: usize,
    trees: Vec<Tree>,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

struct Grower<'a> {
    ds: &'a LabeledDataset,
    columns: &'a [Vec<(u32, u32)>],
    params: &'a ForestParams,
    classes: usize,
    mtry: usize,
    weights: Vec<u32>,
    mark: Vec<u32>,
    stamp: u32,
    perm: Vec<usize>,
    rng: ChaCha8Rng,
}

/// Sum over both sides of `w * gini`, i.e. `w - sum(c^2) / w`.
fn side_impurity(counts: &[f64], w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    w - counts.iter().map(|c| c * c).sum::<f64>() / w
}

impl<'a> Grower<'a> {
    fn class_weights(&self, samples: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.classes];
        let targets = self.ds.targets();
        for &s in samples {
            c[targets[s]] += self.weights[s] as f64;
        }
        c
    }

    /// Nonzero `(value, sample)` pairs of feature `f` within `samples`.
    fn nonzeros(&mut self, f: usize, samples: &[usize]) -> Vec<(u32, usize)> {
        let column = &self.columns[f];
        let mut out = Vec::new();
        if samples.len() * 16 < column.len() {
            for &s in samples {
                let x = self.ds.rows()[s].1.get(f as u32);
                if x > 0 {
                    out.push((x, s));
                }
            }
        } else {
            self.stamp += 1;
            for &s in samples {
                self.mark[s] = self.stamp;
            }
            for &(r, x) in column {
                if self.mark[r as usize] == self.stamp {
                    out.push((x, r as usize));
                }
            }
        }
        out
    }

    fn best_split_on(&mut self, f: usize, samples: &[usize], totals: &[f64], total_w: f64) -> Option<Split> {
        let mut nz = self.nonzeros(f, samples);
        if nz.is_empty() {
            return None;
        }
        nz.sort_unstable();
        let zero_count = samples.len() - nz.len();
        if zero_count == 0 && nz[0].0 == nz[nz.len() - 1].0 {
            return None;
        }
        let targets = self.ds.targets();
        let mut left = totals.to_vec();
        let mut left_w = total_w;
        for &(_, s) in &nz {
            let w = self.weights[s] as f64;
            left[targets[s]] -= w;
            left_w -= w;
        }
        let mut best: Option<Split> = None;
        let mut consider = |left: &[f64], left_w: f64, threshold: f64| {
            let right: Vec<f64> = totals.iter().zip(left).map(|(t, l)| t - l).collect();
            let imp = side_impurity(left, left_w) + side_impurity(&right, total_w - left_w);
            if best.as_ref().map_or(true, |b| imp < b.impurity) {
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity: imp,
                });
            }
        };
        if zero_count > 0 {
            consider(&left, left_w, nz[0].0 as f64 / 2.0);
        }
        let mut i = 0;
        while i < nz.len() {
            let value = nz[i].0;
            while i < nz.len() && nz[i].0 == value {
                let s = nz[i].1;
                let w = self.weights[s] as f64;
                left[targets[s]] += w;
                left_w += w;
                i += 1;
            }
            if i < nz.len() {
                consider(&left, left_w, (value as f64 + nz[i].0 as f64) / 2.0);
            }
        }
        best
    }

    /// Draws features without replacement until at least `mtry` have been
    /// tried and one of them admits a split.
    fn choose_split(&mut self, samples: &[usize], totals: &[f64], total_w: f64) -> Option<Split> {
        let d = self.perm.len();
        let mut best: Option<Split> = None;
        for k in 0..d {
            if k >= self.mtry && best.is_some() {
                break;
            }
            let j = self.rng.gen_range(k..d);
            self.perm.swap(k, j);
            let f = self.perm[k];
            if let Some(s) = self.best_split_on(f, samples, totals, total_w) {
                if best.as_ref().map_or(true, |b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn grow(mut self) -> Tree {
        let root: Vec<usize> = (0..self.ds.len()).filter(|&s| self.weights[s] > 0).collect();
        let mut nodes = vec![Node::Leaf(Vec::new())];
        let mut stack = vec![(0usize, root, 0usize)];
        while let Some((at, samples, depth)) = stack.pop() {
            let totals = self.class_weights(&samples);
            let total_w: f64 = totals.iter().sum();
            let pure = totals.iter().filter(|&&c| c > 0.0).count() <= 1;
            let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
            let split = if pure || depth_capped || total_w < self.params.min_samples_split as f64 {
                None
            } else {
                self.choose_split(&samples, &totals, total_w)
            };
            match split {
                None => {
                    nodes[at] = Node::Leaf(totals.iter().map(|c| c / total_w).collect());
                }
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = samples
                        .iter()
                        .partition(|&&i| self.ds.rows()[i].1.get(s.feature as u32) as f64 <= s.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf(Vec::new()));
                    nodes.push(Node::Leaf(Vec::new()));
                    nodes[at] = Node::Split {
                        feature: s.feature as u32,
                        threshold: s.threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }
}

impl Forest {
    pub(crate) fn fit(ds: &LabeledDataset, params: &ForestParams) -> Self {
        let columns = ds.columns();
        let d = ds.num_features();
        let classes = ds.label_set().len();
        let n = ds.len();
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let seed = params.seed.wrapping_add((t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut weights = vec![0u32; n];
                if params.bootstrap {
                    for _ in 0..n {
                        weights[rng.gen_range(0..n)] += 1;
                    }
                } else {
                    weights.iter_mut().for_each(|w| *w = 1);
                }
                let mut perm: Vec<usize> = (0..d).collect();
                perm.shuffle(&mut rng);
                Grower {
                    ds,
                    columns: &columns,
                    params,
                    classes,
                    mtry: params.max_features.resolve(d),
                    weights,
                    mark: vec![0; n],
                    stamp: 0,
                    perm,
                    rng,
                }
                .grow()
            })
            .collect();
        Forest { classes, trees }
    }

    /// Mean of the per-tree leaf class distributions.
    pub fn proba(&self, v: &SparseVector) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.leaf_for(v)) {
                *o += p;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}
