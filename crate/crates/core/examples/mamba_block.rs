//! Runs one block over a serialized grid and shows that the output at a
//! token ignores everything after it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxseq::mamba::{mamba_block_forward, MambaBlockParams, MambaConfig};
use voxseq::nn::Parameters;
use voxseq::{apply_ordering, build_ordering, FeatureGrid, GridDims, Scheme};

fn main() -> voxseq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let block = MambaBlockParams::init(MambaConfig::new(8), &mut rng)?;
    println!("block {:?}, {} parameters", block.config(), block.num_params());

    let dims = GridDims::new(4, 4, 4, 8)?;
    let grid = FeatureGrid::from_vec(dims, (0..dims.voxels() * 8).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let ordering = build_ordering(Scheme::HeightPrioritizedHilbert2d, dims)?;
    let seq = apply_ordering(&grid, &ordering)?;
    let out = mamba_block_forward(&block, &seq)?;

    let cut = 20;
    let mut changed = seq.clone();
    changed.data_mut()[cut * 8..].iter_mut().for_each(|v| *v += 1.0);
    let out2 = mamba_block_forward(&block, &changed)?;
    let diff = |k: usize| out.token(0, k).iter().zip(out2.token(0, k)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("perturb tokens {cut}.., output change at {}: {:.2e}, at {cut}: {:.2e}", cut - 1, diff(cut - 1), diff(cut));
    Ok(())
}
