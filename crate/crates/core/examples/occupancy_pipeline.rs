//! Fuse two modalities, run the hierarchy, upsample to the output grid and
//! classify every voxel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxseq::head::{classify, coarse_to_fine, fuse_concat, Mlp};
use voxseq::hierarchy::{HierarchyConfig, HierarchyParams, LevelPlan};
use voxseq::{FeatureGrid, GridDims};

fn main() -> voxseq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let classes = 5;
    let dims = GridDims::spatial(16, 16, 8)?;
    let lidar = FeatureGrid::from_vec(dims.with_channels(4), (0..dims.voxels() * 4).map(|i| (i as f64 * 0.1).cos()).collect())?;
    let camera = FeatureGrid::from_vec(dims.with_channels(4), (0..dims.voxels() * 4).map(|i| (i as f64 * 0.3).sin()).collect())?;
    let fused = fuse_concat(&lidar, &camera)?;

    let params = HierarchyParams::init(HierarchyConfig::new(8, 3), &mut rng)?;
    let plan = LevelPlan::new(&params.config, fused.dims())?;
    let features = params.forward(&plan, &fused)?;
    let fine = coarse_to_fine(&features, GridDims::new(32, 32, 16, features.channels())?)?;
    let head = Mlp::init(fine.channels(), classes, &mut rng);
    let pred = classify(&fine, &head, classes)?;

    let mut counts = vec![0usize; classes];
    pred.labels().iter().for_each(|&l| counts[l as usize] += 1);
    println!("{} -> {} -> logits {}", fused.dims(), fine.dims(), pred.dims());
    println!("untrained label histogram {counts:?}");
    Ok(())
}
