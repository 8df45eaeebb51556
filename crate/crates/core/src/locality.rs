//! How far apart 6-adjacent voxels end up in a serialized sequence.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{contract, Result};
use crate::ordering::{build_ordering, Ordering, OrderingScheme};
use crate::tensor::GridDims;

pub const CSV_HEADER: &str = "scheme,w,h,d,mean,max,p50,p95,pairs";

/// Sequence-distance statistics over all unordered 6-adjacent voxel pairs.
///
/// Percentiles use the nearest-rank rule. A grid with no adjacent pairs
/// reports every statistic as zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub scheme: OrderingScheme,
    pub dims: GridDims,
    pub mean_neighbor_distance: f64,
    pub max_neighbor_distance: u64,
    pub p50: u64,
    pub p95: u64,
    pub pair_count: u64,
}

impl LocalityReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{},{},{},{}",
            self.scheme,
            self.dims.w,
            self.dims.h,
            self.dims.d,
            self.mean_neighbor_distance,
            self.max_neighbor_distance,
            self.p50,
            self.p95,
            self.pair_count
        )
    }
}

/// `3·w·h·d − w·h − h·d − w·d`
pub fn adjacent_pair_count(dims: GridDims) -> u64 {
    let (w, h, d) = (dims.w as u64, dims.h as u64, dims.d as u64);
    3 * w * h * d - w * h - h * d - w * d
}

pub fn neighbor_distance_stats(ordering: &Ordering) -> LocalityReport {
    let dims = ordering.dims();
    let (w, h, d) = (dims.w, dims.h, dims.d);
    let pos = ordering.linear_to_seq();
    let n = dims.voxels();

    // one histogram per z slab, merged in slab order
    let hist = (0..d)
        .into_par_iter()
        .fold(
            || vec![0u64; n.max(1)],
            |mut hist, z| {
                let base = w * h * z;
                for y in 0..h {
                    for x in 0..w {
                        let l = base + w * y + x;
                        let p = pos[l];
                        if x + 1 < w {
                            hist[p.abs_diff(pos[l + 1]) as usize] += 1;
                        }
                        if y + 1 < h {
                            hist[p.abs_diff(pos[l + w]) as usize] += 1;
                        }
                        if z + 1 < d {
                            hist[p.abs_diff(pos[l + w * h]) as usize] += 1;
                        }
                    }
                }
                hist
            },
        )
        .reduce(
            || vec![0u64; n.max(1)],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    summarize(ordering.scheme(), dims, &hist)
}

fn summarize(scheme: OrderingScheme, dims: GridDims, hist: &[u64]) -> LocalityReport {
    let pair_count: u64 = hist.iter().sum();
    if pair_count == 0 {
        return LocalityReport {
            scheme,
            dims,
            mean_neighbor_distance: 0.0,
            max_neighbor_distance: 0,
            p50: 0,
            p95: 0,
            pair_count: 0,
        };
    }
    let total: u128 = hist.iter().enumerate().map(|(dist, &c)| dist as u128 * c as u128).sum();
    let max = hist.iter().rposition(|&c| c > 0).unwrap_or(0) as u64;
    let rank = |pct: u64| -> u64 {
        // nearest rank: ceil(pct/100 · count), 1-based
        let target = (pct * pair_count).div_ceil(100).max(1);
        let mut seen = 0u64;
        for (dist, &c) in hist.iter().enumerate() {
            seen += c;
            if seen >= target {
                return dist as u64;
            }
        }
        max
    };
    LocalityReport {
        scheme,
        dims,
        mean_neighbor_distance: total as f64 / pair_count as f64,
        max_neighbor_distance: max,
        p50: rank(50),
        p95: rank(95),
        pair_count,
    }
}

/// One report per scheme, all on the same grid.
pub fn compare_schemes(dims: GridDims, schemes: &[OrderingScheme]) -> Result<Vec<LocalityReport>> {
    if schemes.is_empty() {
        return Err(contract("scheme list is empty"));
    }
    schemes
        .iter()
        .map(|&s| build_ordering(s, dims).map(|o| neighbor_distance_stats(&o)))
        .collect()
}
