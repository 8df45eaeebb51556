//! Training objective: cross-entropy, Lovász-softmax and the weighted sum
//! with externally supplied terms.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::head::OccupancyPrediction;
use crate::tensor::FeatureGrid;

pub const IGNORE_LABEL: u16 = 255;

fn check_labels(dims_voxels: usize, k: usize, labels: &[u16], ignore: u16) -> Result<()> {
    if labels.len() != dims_voxels {
        return Err(contract(format!("{} labels for {dims_voxels} voxels", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l != ignore && l as usize >= k) {
        return Err(contract(format!("label {l} out of range for {k} classes")));
    }
    Ok(())
}

/// Row-wise softmax over the channel axis.
pub fn softmax(logits: &FeatureGrid) -> FeatureGrid {
    let k = logits.channels();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Pulls a gradient with respect to softmax outputs back to the logits.
pub fn softmax_backward(probs: &FeatureGrid, dprobs: &FeatureGrid) -> FeatureGrid {
    let k = probs.channels();
    let mut out = dprobs.clone();
    for (g, p) in out.data_mut().chunks_exact_mut(k).zip(probs.data().chunks_exact(k)) {
        let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(p).for_each(|(gi, pi)| *gi = pi * (*gi - dot));
    }
    out
}

/// Mean `−log softmax(logits)[label]` over non-ignored voxels, and its
/// gradient with respect to the logits.
pub fn cross_entropy(pred: &OccupancyPrediction, labels: &[u16], ignore: u16) -> Result<(f64, FeatureGrid)> {
    let logits = pred.logits();
    let k = logits.channels();
    check_labels(logits.dims().voxels(), k, labels, ignore)?;
    let count = labels.iter().filter(|&&l| l != ignore).count();
    let mut grad = FeatureGrid::zeros(logits.dims());
    if count == 0 {
        return Ok((0.0, grad));
    }
    let probs = softmax(logits);
    let scale = 1.0 / count as f64;
    let mut loss = 0.0;
    for (v, &label) in labels.iter().enumerate() {
        if label == ignore {
            continue;
        }
        let row = logits.voxel(v);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        loss += lse - row[label as usize];
        let g = grad.voxel_mut(v);
        g.iter_mut().zip(probs.voxel(v)).for_each(|(gi, p)| *gi = p * scale);
        g[label as usize] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Increments of the Jaccard loss along errors sorted descending.
fn jaccard_increments(fg_sorted: &[bool]) -> Vec<f64> {
    let gts = fg_sorted.iter().filter(|&&f| f).count() as f64;
    let mut cum_fg = 0.0;
    let mut cum_bg = 0.0;
    let mut prev = 0.0;
    fg_sorted
        .iter()
        .map(|&f| {
            if f {
                cum_fg += 1.0;
            } else {
                cum_bg += 1.0;
            }
            let jac = 1.0 - (gts - cum_fg) / (gts + cum_bg);
            let inc = jac - prev;
            prev = jac;
            inc
        })
        .collect()
}

/// Lovász extension of the Jaccard loss, averaged over the classes present
/// in the labels. The gradient is with respect to the probabilities.
pub fn lovasz_softmax(probs: &FeatureGrid, labels: &[u16], ignore: u16) -> Result<(f64, FeatureGrid)> {
    let k = probs.channels();
    check_labels(probs.dims().voxels(), k, labels, ignore)?;
    let kept: Vec<usize> = (0..labels.len()).filter(|&v| labels[v] != ignore).collect();
    let mut grad = FeatureGrid::zeros(probs.dims());
    let present: Vec<usize> = (0..k).filter(|&c| kept.iter().any(|&v| labels[v] as usize == c)).collect();
    if present.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / present.len() as f64;
    let mut loss = 0.0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(kept.len());
    for &c in &present {
        order.clear();
        order.extend(kept.iter().map(|&v| {
            let fg = if labels[v] as usize == c { 1.0 } else { 0.0 };
            ((fg - probs.voxel(v)[c]).abs(), v)
        }));
        // stable, so ties keep voxel order
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        let fg: Vec<bool> = order.iter().map(|&(_, v)| labels[v] as usize == c).collect();
        let inc = jaccard_increments(&fg);
        for ((&(e, v), &w), &f) in order.iter().zip(&inc).zip(&fg) {
            loss += e * w * scale;
            // d|fg − p|/dp is −1 on foreground, +1 elsewhere
            grad.voxel_mut(v)[c] += if f { -w * scale } else { w * scale };
        }
    }
    Ok((loss, grad))
}

/// Lovász-softmax on logits, with the gradient chained through softmax.
pub fn lovasz_softmax_logits(pred: &OccupancyPrediction, labels: &[u16], ignore: u16) -> Result<(f64, FeatureGrid)> {
    let probs = softmax(pred.logits());
    let (loss, dprobs) = lovasz_softmax(&probs, labels, ignore)?;
    Ok((loss, softmax_backward(&probs, &dprobs)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub iou: f64,
    pub geo: f64,
    pub sem: f64,
    pub depth: f64,
}

impl LossWeights {
    pub fn new(iou: f64, geo: f64, sem: f64, depth: f64) -> Result<Self> {
        let w = Self { iou, geo, sem, depth };
        if [iou, geo, sem, depth].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(contract(format!("loss weights must be finite and nonnegative, got {w:?}")));
        }
        Ok(w)
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { iou: 1.0, geo: 1.0, sem: 1.0, depth: 1.0 }
    }
}

/// Loss terms; the last three come from outside this crate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ce: f64,
    pub iou: f64,
    pub geo: Option<f64>,
    pub sem: Option<f64>,
    pub depth: Option<f64>,
}

/// `ce + λ1·iou + λ2·geo + λ3·sem + λ4·depth`, absent terms counting as 0.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> f64 {
    let named = [
        ("ce", Some(parts.ce)),
        ("iou", Some(parts.iou)),
        ("geo", parts.geo),
        ("sem", parts.sem),
        ("depth", parts.depth),
    ];
    for (name, v) in named {
        if let Some(v) = v.filter(|v| *v < 0.0) {
            log::warn!("negative {name} loss {v} is summed as given");
        }
    }
    parts.ce
        + weights.iou * parts.iou
        + weights.geo * parts.geo.unwrap_or(0.0)
        + weights.sem * parts.sem.unwrap_or(0.0)
        + weights.depth * parts.depth.unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::GridDims;

    fn pred(k: usize, rows: &[f64]) -> OccupancyPrediction {
        let n = rows.len() / k;
        OccupancyPrediction::new(FeatureGrid::from_vec(GridDims::new(n, 1, 1, k).unwrap(), rows.to_vec()).unwrap())
            .unwrap()
    }

    fn probs(k: usize, rows: &[f64]) -> FeatureGrid {
        FeatureGrid::from_vec(GridDims::new(rows.len() / k, 1, 1, k).unwrap(), rows.to_vec()).unwrap()
    }

    #[test]
    fn ce_examples() {
        let (l, _) = cross_entropy(&pred(4, &[0.0; 4]), &[2], IGNORE_LABEL).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        let (l, g) = cross_entropy(&pred(2, &[0.0, 3f64.ln()]), &[1], IGNORE_LABEL).unwrap();
        assert!((l - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((g.data()[0] - 0.25).abs() < 1e-15 && (g.data()[1] + 0.25).abs() < 1e-15);
        let (l, _) = cross_entropy(&pred(2, &[-40.0, 40.0]), &[1], IGNORE_LABEL).unwrap();
        assert!(l < 1e-30);
    }

    #[test]
    fn ce_ignores_voxels() {
        let p = pred(2, &[1.0, 0.0, 0.0, 2.0]);
        let (l, g) = cross_entropy(&p, &[IGNORE_LABEL, IGNORE_LABEL], IGNORE_LABEL).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let (l1, g1) = cross_entropy(&p, &[IGNORE_LABEL, 1], IGNORE_LABEL).unwrap();
        let (l2, _) = cross_entropy(&pred(2, &[0.0, 2.0]), &[1], IGNORE_LABEL).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(&g1.data()[..2], &[0.0, 0.0]);
        assert!(cross_entropy(&p, &[0, 2], IGNORE_LABEL).is_err());
        assert!(cross_entropy(&p, &[0], IGNORE_LABEL).is_err());
    }

    #[test]
    fn lovasz_examples() {
        let (l, _) = lovasz_softmax(&probs(3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), &[0, 2], IGNORE_LABEL).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = lovasz_softmax(&probs(2, &[1.0, 0.0]), &[1], IGNORE_LABEL).unwrap();
        assert_eq!(l, 1.0);
        let (l, g) = lovasz_softmax(&probs(2, &[0.3, 0.7]), &[IGNORE_LABEL], IGNORE_LABEL).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lovasz_single_class_two_voxels() {
        let (l, g) = lovasz_softmax(&probs(2, &[0.6, 0.4, 0.8, 0.2]), &[1, 1], IGNORE_LABEL).unwrap();
        // class 1 only: errors 0.6, 0.8 → sorted 0.8, 0.6; jaccard 0.5, 1
        assert!((l - (0.8 * 0.5 + 0.6 * 0.5)).abs() < 1e-15);
        assert_eq!(g.data(), &[0.0, -0.5, 0.0, -0.5]);
    }

    #[test]
    fn lovasz_bounded() {
        let p = probs(3, &[0.2, 0.3, 0.5, 0.9, 0.05, 0.05, 0.1, 0.1, 0.8, 0.4, 0.4, 0.2]);
        let (l, _) = lovasz_softmax(&p, &[0, 1, 2, 0], IGNORE_LABEL).unwrap();
        assert!((0.0..=1.0).contains(&l));
    }

    #[test]
    fn softmax_rows() {
        let s = softmax(&probs(3, &[1000.0, 1000.0, 1000.0, 0.0, 0.0, 3f64.ln()]));
        assert!(s.data()[..3].iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!((s.data()[5] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w), 0.0);
        assert_eq!(total_loss(&LossParts { ce: 1.0, iou: 2.0, ..Default::default() }, &w), 3.0);
        let all = LossParts { ce: 1.0, iou: 1.0, geo: Some(1.0), sem: Some(1.0), depth: Some(1.0) };
        assert_eq!(total_loss(&all, &w), 5.0);
        let half = LossWeights::new(0.5, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(total_loss(&all, &half), 4.5);
        assert_eq!(total_loss(&LossParts { ce: -1.0, iou: 0.5, ..Default::default() }, &w), -0.5);
        assert!(LossWeights::new(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(LossWeights::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
    }
}
