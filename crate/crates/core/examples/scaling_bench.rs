//! Times the block forward pass at growing sequence lengths and fits the
//! log-log slope.
//!
//! `cargo run --release --example scaling_bench`

use voxseq::bench::bench_block;

fn main() -> voxseq::Result<()> {
    let lengths: Vec<usize> = (10..=16).map(|p| 1 << p).collect();
    let report = bench_block(&lengths, 16, 3, 0)?;
    for row in &report.rows {
        println!("n {:>6}  {:>10.3} ms  ± {:.3}", row.n, row.mean_ns / 1e6, row.stddev_ns / 1e6);
    }
    println!("slope {:.3}", report.slope);
    Ok(())
}
