//! Shapes through a four-level encoder and decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxseq::hierarchy::{HierarchyConfig, HierarchyParams, LevelPlan};
use voxseq::nn::Parameters;
use voxseq::{FeatureGrid, GridDims};

fn main() -> voxseq::Result<()> {
    let config = HierarchyConfig::new(8, 4);
    let params = HierarchyParams::init(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let dims = GridDims::new(16, 16, 8, 8)?;
    let plan = LevelPlan::new(&params.config, dims)?;
    println!("widths {:?}, {} parameters", params.config.widths, params.num_params());
    for (l, d) in plan.level_dims().iter().enumerate() {
        println!("level {l}: {d}");
    }

    let grid = FeatureGrid::from_vec(dims, (0..dims.voxels() * 8).map(|i| ((i % 13) as f64 - 6.0) / 6.0).collect())?;
    let (latent, state) = params.encoder_forward(&plan, &grid)?;
    println!("latent {}, {} skips", latent.dims(), state.skips.len());
    let out = params.decoder_forward(&plan, &latent, &state)?;
    println!("output {}", out.dims());
    assert_eq!(out.dims(), dims);
    Ok(())
}
