use serde::Serialize;

use crate::error::{Error, Result};

/// Counts indexed `[true label][predicted label]` over `labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix must be {0}x{0}",
                labels.len()
            )));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    /// Element-wise sum; both matrices must share the label set.
    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.labels, other.labels, "label sets differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No sample was predicted as this class; precision is reported as 0.
    pub precision_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1, and their support-weighted means.
pub fn weighted_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut per_class = Vec::with_capacity(cm.labels.len());
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    let mut correct = 0;
    for (c, label) in cm.labels.iter().enumerate() {
        let tp = cm.counts[c][c];
        correct += tp;
        let support = cm.support(c);
        let predicted = cm.predicted(c);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let w = support as f64 / total as f64;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        per_class.push(ClassMetrics {
            label: label.clone(),
            support,
            precision,
            recall,
            f1,
            precision_undefined: predicted == 0,
        });
    }
    Ok(Metrics {
        per_class,
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f1: wf,
        accuracy: ratio(correct, total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn worked_two_class_example() {
        // rows: true malware, true benign
        let cm = ConfusionMatrix::from_counts(labels(2), vec![vec![95, 5], vec![3, 97]]).unwrap();
        let m = weighted_metrics(&cm).unwrap();
        // P_m = 95/98, R_m = 0.95; P_b = 97/102, R_b = 0.97
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        let expect = 0.5 * f(95.0 / 98.0, 0.95) + 0.5 * f(97.0 / 102.0, 0.97);
        assert!((m.weighted_f1 - expect).abs() < 1e-12);
        assert!((m.weighted_f1 - 0.96).abs() < 1e-4);
        assert!((m.accuracy - 0.96).abs() < 1e-12);
    }

    #[test]
    fn diagonal_and_zero_diagonal() {
        let cm = ConfusionMatrix::from_counts(labels(3), vec![vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]).unwrap();
        let m = weighted_metrics(&cm).unwrap();
        assert_eq!((m.weighted_precision, m.weighted_recall, m.weighted_f1), (1.0, 1.0, 1.0));

        let cm = ConfusionMatrix::from_counts(labels(2), vec![vec![0, 7], vec![3, 0]]).unwrap();
        assert_eq!(weighted_metrics(&cm).unwrap().weighted_f1, 0.0);
    }

    #[test]
    fn undefined_precision_is_flagged() {
        let cm = ConfusionMatrix::from_counts(labels(2), vec![vec![5, 0], vec![5, 0]]).unwrap();
        let m = weighted_metrics(&cm).unwrap();
        assert!(m.per_class[1].precision_undefined);
        assert_eq!(m.per_class[1].precision, 0.0);
        assert!(!m.per_class[0].precision_undefined);
    }

    #[test]
    fn single_supported_class() {
        let cm = ConfusionMatrix::from_counts(labels(2), vec![vec![3, 1], vec![0, 0]]).unwrap();
        let m = weighted_metrics(&cm).unwrap();
        assert!((m.weighted_f1 - m.per_class[0].f1).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix() {
        assert!(matches!(weighted_metrics(&ConfusionMatrix::new(labels(2))), Err(Error::EmptyMatrix)));
    }
}
