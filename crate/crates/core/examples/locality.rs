//! Mean, max and percentile sequence distance between 6-adjacent voxels for
//! every scheme on a few grid sizes.

use voxseq::locality::{compare_schemes, CSV_HEADER};
use voxseq::{GridDims, OrderingScheme, Scheme};

fn main() -> voxseq::Result<()> {
    let mut schemes: Vec<OrderingScheme> = Scheme::ALL.iter().map(|&s| s.into()).collect();
    schemes.push(OrderingScheme::snaked(Scheme::HeightPrioritizedHilbert2d));
    println!("{CSV_HEADER}");
    for (w, h, d) in [(8, 8, 4), (16, 16, 8), (32, 32, 16)] {
        for report in compare_schemes(GridDims::spatial(w, h, d)?, &schemes)? {
            println!("{}", report.csv_row());
        }
    }
    Ok(())
}
