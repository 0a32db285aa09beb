//! Segmentation and point-classification scores.

use crate::error::{Error, Result};
use crate::volume::LabelMask;

/// Per-class Dice for labels `1..num_classes` (background excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct DiceReport {
    /// `per_class[i]` is the Dice of label `i + 1`.
    pub per_class: Vec<f64>,
}

impl DiceReport {
    pub fn mean(&self) -> f64 {
        if self.per_class.is_empty() {
            return 1.0;
        }
        self.per_class.iter().sum::<f64>() / self.per_class.len() as f64
    }

    pub fn for_label(&self, label: u16) -> Option<f64> {
        (label as usize).checked_sub(1).and_then(|i| self.per_class.get(i).copied())
    }
}

/// `2|P∩T| / (|P|+|T|)` per foreground label; 1.0 when a label is absent
/// from both masks.
pub fn dice_per_class(pred: &LabelMask, truth: &LabelMask) -> Result<DiceReport> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimsMismatch { left: pred.dims(), right: truth.dims() });
    }
    let classes = pred.num_classes().max(truth.num_classes()) as usize;
    let mut both = vec![0u64; classes];
    let mut in_pred = vec![0u64; classes];
    let mut in_truth = vec![0u64; classes];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        in_pred[p as usize] += 1;
        in_truth[t as usize] += 1;
        if p == t {
            both[p as usize] += 1;
        }
    }
    let per_class = (1..classes)
        .map(|c| {
            let denom = in_pred[c] + in_truth[c];
            if denom == 0 {
                1.0
            } else {
                2.0 * both[c] as f64 / denom as f64
            }
        })
        .collect();
    Ok(DiceReport { per_class })
}

/// Counts indexed `[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn from_matrix(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("confusion matrix must be square".into()));
        }
        Ok(Self { num_classes: n, counts: rows.concat() })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.num_classes || predicted >= self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "pair ({truth}, {predicted}) outside {} classes",
                self.num_classes
            )));
        }
        self.counts[truth * self.num_classes + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-class F1; 0 when the class is neither present nor predicted.
    pub fn f1_per_class(&self) -> Vec<f64> {
        let n = self.num_classes;
        (0..n)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let predicted: u64 = (0..n).map(|t| self.get(t, c)).sum();
                let actual: u64 = (0..n).map(|p| self.get(c, p)).sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }
}

/// Accuracy and the unweighted mean F1 over every class, background included.
pub fn accuracy_and_macro_f1(counts: &ConfusionCounts) -> Result<(f64, f64)> {
    let total = counts.total();
    if total == 0 || counts.num_classes == 0 {
        return Err(Error::EmptyCounts);
    }
    let trace: u64 = (0..counts.num_classes).map(|c| counts.get(c, c)).sum();
    let f1 = counts.f1_per_class();
    Ok((trace as f64 / total as f64, f1.iter().sum::<f64>() / f1.len() as f64))
}
