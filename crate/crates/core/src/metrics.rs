//! Confusion counting and IoU metrics. Class 0 is the empty class.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::loss::IGNORE_LABEL;

/// `K × K` counts, rows ground truth, columns prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    ignore_label: u16,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Result<Self> {
        Self::with_ignore(k, IGNORE_LABEL)
    }

    pub fn with_ignore(k: usize, ignore_label: u16) -> Result<Self> {
        if k < 2 {
            return Err(contract(format!("need at least 2 classes, got {k}")));
        }
        Ok(Self { k, counts: vec![0; k * k], ignore_label })
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(contract(format!("{} counts for {k} classes", counts.len())));
        }
        let mut m = Self::new(k)?;
        m.counts = counts;
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn ignore_label(&self) -> u16 {
        self.ignore_label
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Voxels whose ground truth is the ignore label are skipped.
    pub fn accumulate(&mut self, pred: &[u16], truth: &[u16]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(contract(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        let k = self.k;
        let bad = |l: u16| l != self.ignore_label && l as usize >= k;
        if let Some(l) = pred.iter().chain(truth).copied().find(|&l| bad(l)) {
            return Err(contract(format!("label {l} out of range for {k} classes")));
        }
        for (&p, &t) in pred.iter().zip(truth) {
            if t == self.ignore_label || p == self.ignore_label {
                continue;
            }
            self.counts[t as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k || other.ignore_label != self.ignore_label {
            return Err(contract("cannot merge confusion matrices of different shape"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// `None` where a class was neither present nor predicted.
    pub per_class: Vec<Option<f64>>,
    /// Mean over defined semantic classes (1..K).
    pub miou: Option<f64>,
    /// Mean over every defined class, empty included.
    pub mean_all: Option<f64>,
    /// Occupied-vs-empty IoU.
    pub geometry_iou: Option<f64>,
    /// No voxel was counted.
    pub undefined: bool,
}

fn ratio(tp: u64, fp: u64, fnn: u64) -> Option<f64> {
    let denom = tp + fp + fnn;
    (denom > 0).then(|| tp as f64 / denom as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn iou_from_confusion(cm: &ConfusionMatrix) -> IouReport {
    let k = cm.k;
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let fp = (0..k).map(|t| cm.get(t, c)).sum::<u64>() - tp;
            let fnn = (0..k).map(|p| cm.get(c, p)).sum::<u64>() - tp;
            ratio(tp, fp, fnn)
        })
        .collect();
    // occupied = any class other than 0
    let empty_empty = cm.get(0, 0);
    let truth_empty: u64 = (0..k).map(|p| cm.get(0, p)).sum();
    let pred_empty: u64 = (0..k).map(|t| cm.get(t, 0)).sum();
    let total = cm.total();
    let occ_tp = total + empty_empty - truth_empty - pred_empty;
    let occ_fp = truth_empty - empty_empty;
    let occ_fn = pred_empty - empty_empty;
    IouReport {
        miou: mean(per_class[1..].iter().flatten().copied()),
        mean_all: mean(per_class.iter().flatten().copied()),
        geometry_iou: ratio(occ_tp, occ_fp, occ_fn),
        undefined: total == 0,
        per_class,
    }
}
