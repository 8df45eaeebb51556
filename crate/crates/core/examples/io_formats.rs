//! Writes a scene, its labels and an ordering to a temp directory and reads
//! them back.

use voxseq::io::{crc32, encode_grid, read_grid, read_labels, read_ordering, write_grid, write_labels, write_ordering, Dtype};
use voxseq::synth::generate_scene;
use voxseq::{build_ordering, GridDims, Scheme};

fn main() -> voxseq::Result<()> {
    let dir = std::env::temp_dir().join(format!("voxseq-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let dims = GridDims::spatial(8, 8, 4)?;
    let scene = generate_scene(1, dims, 4)?;
    let ordering = build_ordering(Scheme::HeightPrioritizedHilbert2d, dims)?;

    write_grid(dir.join("features.voxg"), &scene.features)?;
    write_labels(dir.join("labels.voxg"), dims, &scene.labels)?;
    write_ordering(dir.join("order.vord"), &ordering)?;
    for name in ["features.voxg", "labels.voxg", "order.vord"] {
        let bytes = std::fs::read(dir.join(name))?;
        println!("{name:<14} {:>6} bytes  crc {:08x}", bytes.len(), crc32(&bytes));
    }
    println!("f32 copy {} bytes", encode_grid(&scene.features, Dtype::F32)?.len());

    assert_eq!(read_grid(dir.join("features.voxg"))?, scene.features);
    assert_eq!(read_labels(dir.join("labels.voxg"))?.1, scene.labels);
    assert_eq!(read_ordering(dir.join("order.vord"))?, ordering);
    std::fs::remove_dir_all(&dir)?;
    println!("round trip ok");
    Ok(())
}
