//! Prints the order-2 Hilbert curve as a grid of indices, checks the 3D
//! curve round trip, and shows a few Morton codes.

use voxseq::sfc::{hilbert2d_coord, hilbert2d_index, hilbert3d_coord, hilbert3d_index, morton3d_coord, morton3d_index, CurveOrder};

fn main() -> voxseq::Result<()> {
    let order = CurveOrder::new(2)?;
    let side = order.side() as u32;
    println!("hilbert 2d, {side}x{side} (y up):");
    for y in (0..side).rev() {
        let row: Vec<String> = (0..side).map(|x| format!("{:2}", hilbert2d_index(x, y, order).unwrap())).collect();
        println!("  {}", row.join(" "));
    }
    for i in [0, 5, 10, 15] {
        println!("  index {i:2} -> {:?}", hilbert2d_coord(i, order)?);
    }

    let order = CurveOrder::covering(6)?;
    let cells = order.side().pow(3);
    let mut prev = hilbert3d_coord(0, order)?;
    for i in 1..cells {
        let (x, y, z) = hilbert3d_coord(i, order)?;
        let step = x.abs_diff(prev.0) + y.abs_diff(prev.1) + z.abs_diff(prev.2);
        assert_eq!(step, 1);
        assert_eq!(hilbert3d_index(x, y, z, order)?, i);
        prev = (x, y, z);
    }
    println!("hilbert 3d order {}: {cells} cells, every step moves one voxel", order.bits());

    for (x, y, z) in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (3, 5, 7)] {
        let code = morton3d_index(x, y, z)?;
        println!("morton ({x},{y},{z}) = {code:#b}");
        assert_eq!(morton3d_coord(code), (x, y, z));
    }
    Ok(())
}
