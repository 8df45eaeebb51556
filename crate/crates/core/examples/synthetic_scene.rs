//! Draws one synthetic scene as height maps: the label of the topmost
//! non-empty voxel in every column.

use voxseq::synth::generate_scene;
use voxseq::GridDims;

fn main() -> voxseq::Result<()> {
    let seed = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed must be an integer"));
    let dims = GridDims::spatial(16, 16, 8)?;
    let scene = generate_scene(seed, dims, 4)?;
    let glyph = ['.', 'g', 'B', 'C'];
    println!("seed {seed}, top labels (g ground, B box, C column):");
    for y in (0..dims.h).rev() {
        let row: String = (0..dims.w)
            .map(|x| {
                let top = (0..dims.d).rev().map(|z| scene.labels[dims.linear(x, y, z)]).find(|&l| l != 0);
                glyph[top.unwrap_or(0) as usize]
            })
            .collect();
        println!("  {row}");
    }
    let mut counts = [0usize; 4];
    scene.labels.iter().for_each(|&l| counts[l as usize] += 1);
    println!("voxels per class {counts:?}, features {}", scene.features.dims());
    Ok(())
}
