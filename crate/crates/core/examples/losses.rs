//! Cross-entropy, Lovász-softmax and the weighted total on a tiny example.

use voxseq::head::OccupancyPrediction;
use voxseq::loss::{cross_entropy, lovasz_softmax_logits, total_loss, LossParts, LossWeights, IGNORE_LABEL};
use voxseq::{FeatureGrid, GridDims};

fn main() -> voxseq::Result<()> {
    let dims = GridDims::new(4, 1, 1, 3)?;
    let labels = [0u16, 1, 2, IGNORE_LABEL];
    for (name, logits) in [
        ("confident", vec![4.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 4.0, 9.0, 9.0, 9.0]),
        ("uniform", vec![0.0; 12]),
        ("wrong", vec![0.0, 4.0, 0.0, 0.0, 0.0, 4.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ] {
        let pred = OccupancyPrediction::new(FeatureGrid::from_vec(dims, logits)?)?;
        let (ce, _) = cross_entropy(&pred, &labels, IGNORE_LABEL)?;
        let (iou, _) = lovasz_softmax_logits(&pred, &labels, IGNORE_LABEL)?;
        let parts = LossParts { ce, iou, geo: None, sem: None, depth: None };
        let total = total_loss(&parts, &LossWeights::new(1.0, 0.5, 0.5, 0.1)?);
        println!("{name:<10} ce {ce:.4}  lovasz {iou:.4}  total {total:.4}");
    }
    Ok(())
}
