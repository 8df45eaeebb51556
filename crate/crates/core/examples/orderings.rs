//! Serializes a small grid under every scheme and prints where each voxel
//! lands in the sequence.
//!
//! `cargo run --example orderings [WxHxD]`

use voxseq::{apply_ordering, build_ordering, invert_ordering, FeatureGrid, GridDims, OrderingScheme, Scheme};

fn main() -> voxseq::Result<()> {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "4x4x2".into());
    let v: Vec<usize> = arg.split('x').map(|p| p.parse().expect("dims look like 4x4x2")).collect();
    let dims = GridDims::new(v[0], v[1], v[2], 1)?;
    let grid = FeatureGrid::from_vec(dims, (0..dims.voxels()).map(|i| i as f64).collect())?;

    for scheme in Scheme::ALL {
        for z_snake in [false, true] {
            if z_snake && !scheme.is_height_prioritized() {
                continue;
            }
            let scheme = OrderingScheme { scheme, z_snake };
            let ordering = build_ordering(scheme, dims)?;
            let seq = apply_ordering(&grid, &ordering)?;
            assert_eq!(invert_ordering(&seq, &ordering)?, grid);
            let shown: Vec<String> = seq.data().iter().take(16).map(|v| v.to_string()).collect();
            println!("{scheme:<22} {}{}", shown.join(" "), if seq.len() > 16 { " ..." } else { "" });
        }
    }
    Ok(())
}
