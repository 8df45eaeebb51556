//! 3D → 1D voxel serialization orders.
//!
//! An [`Ordering`] is a permutation: sequence position `s` holds the voxel
//! with grid linear index `seq_to_linear[s]`. Curve-based schemes are
//! evaluated over the power-of-two bounding square/cube of the grid; cells
//! outside the grid are skipped and the remaining positions compacted.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::sfc::{self, CurveOrder};
use crate::tensor::{FeatureGrid, GridDims, SequenceTensor};

/// Which traversal to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// x fastest, then y, then z.
    RasterXyz,
    /// z fastest, then x, then y.
    RasterZxy,
    Morton3d,
    Hilbert3d,
    /// Full z columns, columns visited along a 2D Hilbert curve over xy.
    HeightPrioritizedHilbert2d,
    /// Full z columns, columns visited along a 2D Morton curve over xy.
    HeightPrioritizedMorton2d,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::RasterXyz,
        Scheme::RasterZxy,
        Scheme::Morton3d,
        Scheme::Hilbert3d,
        Scheme::HeightPrioritizedHilbert2d,
        Scheme::HeightPrioritizedMorton2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RasterXyz => "raster-xyz",
            Scheme::RasterZxy => "raster-zxy",
            Scheme::Morton3d => "morton3d",
            Scheme::Hilbert3d => "hilbert3d",
            Scheme::HeightPrioritizedHilbert2d => "hp-hilbert2d",
            Scheme::HeightPrioritizedMorton2d => "hp-morton2d",
        }
    }

    /// Byte used in the VORD file header.
    pub fn code(self) -> u8 {
        match self {
            Scheme::RasterXyz => 0,
            Scheme::RasterZxy => 1,
            Scheme::Morton3d => 2,
            Scheme::Hilbert3d => 3,
            Scheme::HeightPrioritizedHilbert2d => 4,
            Scheme::HeightPrioritizedMorton2d => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }

    pub fn is_height_prioritized(self) -> bool {
        matches!(self, Scheme::HeightPrioritizedHilbert2d | Scheme::HeightPrioritizedMorton2d)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| contract(format!("unknown ordering scheme `{s}`")))
    }
}

/// A scheme plus the alternating-column flag.
///
/// `z_snake` reverses the z direction on every other column and only
/// affects height-prioritized schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderingScheme {
    pub scheme: Scheme,
    #[serde(default)]
    pub z_snake: bool,
}

impl OrderingScheme {
    pub fn new(scheme: Scheme) -> Self {
        Self { scheme, z_snake: false }
    }

    pub fn snaked(scheme: Scheme) -> Self {
        Self { scheme, z_snake: true }
    }
}

impl From<Scheme> for OrderingScheme {
    fn from(scheme: Scheme) -> Self {
        Self::new(scheme)
    }
}

impl Default for OrderingScheme {
    fn default() -> Self {
        Self::new(Scheme::HeightPrioritizedHilbert2d)
    }
}

impl fmt::Display for OrderingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.z_snake && self.scheme.is_height_prioritized() {
            f.pad(&format!("{}+snake", self.scheme))
        } else {
            f.pad(self.scheme.name())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ordering {
    scheme: OrderingScheme,
    dims: GridDims,
    seq_to_linear: Vec<u64>,
    linear_to_seq: Vec<u64>,
}

impl Ordering {
    /// Wraps an explicit permutation, validating it.
    pub fn from_permutation(
        scheme: OrderingScheme,
        dims: GridDims,
        seq_to_linear: Vec<u64>,
    ) -> Result<Self> {
        let n = dims.voxels();
        if seq_to_linear.len() != n {
            return Err(contract(format!(
                "ordering for {dims} needs {n} entries, got {}",
                seq_to_linear.len()
            )));
        }
        let mut linear_to_seq = vec![u64::MAX; n];
        for (s, &l) in seq_to_linear.iter().enumerate() {
            let slot = linear_to_seq
                .get_mut(l as usize)
                .ok_or_else(|| contract(format!("entry {l} at position {s} is out of range")))?;
            if *slot != u64::MAX {
                return Err(contract(format!("linear index {l} appears twice")));
            }
            *slot = s as u64;
        }
        Ok(Self { scheme, dims: dims.with_channels(0), seq_to_linear, linear_to_seq })
    }

    pub fn scheme(&self) -> OrderingScheme {
        self.scheme
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.seq_to_linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq_to_linear.is_empty()
    }

    pub fn seq_to_linear(&self) -> &[u64] {
        &self.seq_to_linear
    }

    pub fn linear_to_seq(&self) -> &[u64] {
        &self.linear_to_seq
    }

    /// Reorders a flat `voxels × c` buffer from grid layout into sequence layout.
    pub fn gather(&self, grid_data: &[f64], c: usize) -> Vec<f64> {
        debug_assert_eq!(grid_data.len(), self.len() * c);
        let mut out = vec![0.0; grid_data.len()];
        if c == 0 {
            return out;
        }
        out.par_chunks_mut(c).with_min_len(4096).enumerate().for_each(|(s, row)| {
            let l = self.seq_to_linear[s] as usize;
            row.copy_from_slice(&grid_data[l * c..(l + 1) * c]);
        });
        out
    }

    /// Inverse of [`Ordering::gather`].
    pub fn scatter(&self, seq_data: &[f64], c: usize) -> Vec<f64> {
        debug_assert_eq!(seq_data.len(), self.len() * c);
        let mut out = vec![0.0; seq_data.len()];
        if c == 0 {
            return out;
        }
        out.par_chunks_mut(c).with_min_len(4096).enumerate().for_each(|(l, row)| {
            let s = self.linear_to_seq[l] as usize;
            row.copy_from_slice(&seq_data[s * c..(s + 1) * c]);
        });
        out
    }
}

pub fn build_ordering(scheme: impl Into<OrderingScheme>, dims: GridDims) -> Result<Ordering> {
    let scheme = scheme.into();
    let dims = GridDims::new(dims.w, dims.h, dims.d, 0)?;
    let (w, h, d) = (dims.w, dims.h, dims.d);
    let seq: Vec<u64> = match scheme.scheme {
        Scheme::RasterXyz => (0..dims.voxels() as u64).collect(),
        Scheme::RasterZxy => {
            let mut out = Vec::with_capacity(dims.voxels());
            for y in 0..h {
                for x in 0..w {
                    out.extend((0..d).map(|z| dims.linear(x, y, z) as u64));
                }
            }
            out
        }
        Scheme::Morton3d => {
            curve_sort_3d(dims, |x, y, z| sfc::morton3d_index(x as u64, y as u64, z as u64))?
        }
        Scheme::Hilbert3d => {
            let order = CurveOrder::covering(w.max(h).max(d) as u64)?;
            curve_sort_3d(dims, |x, y, z| sfc::hilbert3d_index(x, y, z, order))?
        }
        Scheme::HeightPrioritizedHilbert2d => {
            let order = CurveOrder::covering(w.max(h) as u64)?;
            let columns = curve_sort_2d(w, h, |x, y| sfc::hilbert2d_index(x, y, order))?;
            expand_columns(dims, &columns, scheme.z_snake)
        }
        Scheme::HeightPrioritizedMorton2d => {
            let columns = curve_sort_2d(w, h, |x, y| sfc::morton2d_index(x as u64, y as u64))?;
            expand_columns(dims, &columns, scheme.z_snake)
        }
    };
    Ordering::from_permutation(scheme, dims, seq)
}

fn coord32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| crate::error::range(format!("coordinate {v} exceeds 32 bits")))
}

// Sorting by curve key is equivalent to walking the padded domain and
// skipping cells outside the grid.
fn curve_sort_3d(
    dims: GridDims,
    key: impl Fn(u32, u32, u32) -> Result<u64> + Sync,
) -> Result<Vec<u64>> {
    coord32(dims.w.max(dims.h).max(dims.d))?;
    let mut keyed: Vec<(u64, u64)> = (0..dims.voxels())
        .into_par_iter()
        .with_min_len(4096)
        .map(|l| {
            let (x, y, z) = dims.coord(l);
            key(x as u32, y as u32, z as u32).map(|k| (k, l as u64))
        })
        .collect::<Result<_>>()?;
    keyed.par_sort_unstable();
    Ok(keyed.into_iter().map(|(_, l)| l).collect())
}

fn curve_sort_2d(
    w: usize,
    h: usize,
    key: impl Fn(u32, u32) -> Result<u64>,
) -> Result<Vec<(usize, usize)>> {
    coord32(w.max(h))?;
    let mut keyed = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            keyed.push((key(x as u32, y as u32)?, x, y));
        }
    }
    keyed.sort_unstable();
    Ok(keyed.into_iter().map(|(_, x, y)| (x, y)).collect())
}

fn expand_columns(dims: GridDims, columns: &[(usize, usize)], z_snake: bool) -> Vec<u64> {
    let mut out = Vec::with_capacity(dims.voxels());
    for (i, &(x, y)) in columns.iter().enumerate() {
        if z_snake && i % 2 == 1 {
            out.extend((0..dims.d).rev().map(|z| dims.linear(x, y, z) as u64));
        } else {
            out.extend((0..dims.d).map(|z| dims.linear(x, y, z) as u64));
        }
    }
    out
}

pub fn apply_ordering(grid: &FeatureGrid, ordering: &Ordering) -> Result<SequenceTensor> {
    if !grid.dims().same_spatial(&ordering.dims()) {
        return Err(contract(format!(
            "grid {} does not match ordering dims {}",
            grid.dims(),
            ordering.dims()
        )));
    }
    let c = grid.channels();
    SequenceTensor::from_vec(1, ordering.len(), c, ordering.gather(grid.data(), c))
}

/// Scatters a single-batch sequence back onto the grid.
pub fn invert_ordering(seq: &SequenceTensor, ordering: &Ordering) -> Result<FeatureGrid> {
    let (b, n, c) = seq.shape();
    if b != 1 || n != ordering.len() {
        return Err(contract(format!(
            "sequence {b}x{n}x{c} does not match ordering of length {}",
            ordering.len()
        )));
    }
    FeatureGrid::from_vec(ordering.dims().with_channels(c), ordering.scatter(seq.data(), c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(w: usize, h: usize, d: usize) -> GridDims {
        GridDims::spatial(w, h, d).unwrap()
    }

    fn coords(o: &Ordering) -> Vec<(usize, usize, usize)> {
        o.seq_to_linear().iter().map(|&l| o.dims().coord(l as usize)).collect()
    }

    fn random_grid(d: GridDims, seed: u64) -> FeatureGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d.voxels() * d.c).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureGrid::from_vec(d, data).unwrap()
    }

    #[test]
    fn hp_hilbert_2x2x2() {
        let o = build_ordering(Scheme::HeightPrioritizedHilbert2d, dims(2, 2, 2)).unwrap();
        assert_eq!(
            coords(&o),
            vec![
                (0, 0, 0),
                (0, 0, 1),
                (0, 1, 0),
                (0, 1, 1),
                (1, 1, 0),
                (1, 1, 1),
                (1, 0, 0),
                (1, 0, 1)
            ]
        );
    }

    #[test]
    fn singleton_grid() {
        for s in Scheme::ALL {
            let o = build_ordering(s, dims(1, 1, 1)).unwrap();
            assert_eq!(o.seq_to_linear(), &[0]);
        }
    }

    #[test]
    fn hilbert3d_padded_3x3x2() {
        let o = build_ordering(Scheme::Hilbert3d, dims(3, 3, 2)).unwrap();
        let mut s = o.seq_to_linear().to_vec();
        s.sort_unstable();
        assert_eq!(s, (0..18).collect::<Vec<_>>());
    }

    #[test]
    fn raster_conventions() {
        let d = dims(3, 2, 2);
        let xyz = build_ordering(Scheme::RasterXyz, d).unwrap();
        assert_eq!(&coords(&xyz)[..4], &[(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 1, 0)]);
        let zxy = build_ordering(Scheme::RasterZxy, d).unwrap();
        assert_eq!(&coords(&zxy)[..4], &[(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)]);
    }

    #[test]
    fn zxy_equals_column_expansion_of_row_major() {
        for &(w, h, d) in &[(3, 5, 7), (4, 4, 2), (1, 6, 3)] {
            let gd = dims(w, h, d);
            let columns: Vec<(usize, usize)> =
                (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
            let expected = expand_columns(gd, &columns, false);
            assert_eq!(build_ordering(Scheme::RasterZxy, gd).unwrap().seq_to_linear(), &expected[..]);
        }
    }

    #[test]
    fn snake_alternates_columns() {
        let o = build_ordering(OrderingScheme::snaked(Scheme::HeightPrioritizedHilbert2d), dims(2, 2, 3))
            .unwrap();
        let c = coords(&o);
        assert_eq!(&c[..6], &[(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 2), (0, 1, 1), (0, 1, 0)]);
    }

    #[test]
    fn snake_crossings_are_adjacent_on_hilbert_unit_steps() {
        let gd = dims(8, 8, 5);
        let o = build_ordering(OrderingScheme::snaked(Scheme::HeightPrioritizedHilbert2d), gd).unwrap();
        let c = coords(&o);
        for s in (gd.d..c.len()).step_by(gd.d) {
            let (a, b) = (c[s - 1], c[s]);
            let xy_step = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            if xy_step == 1 {
                assert_eq!(a.2, b.2, "crossing at {s}");
            }
        }
    }

    #[test]
    fn apply_swap_and_identity() {
        let d = GridDims::new(2, 1, 1, 1).unwrap();
        let g = FeatureGrid::from_vec(d, vec![10.0, 20.0]).unwrap();
        let swap = Ordering::from_permutation(Scheme::RasterXyz.into(), d, vec![1, 0]).unwrap();
        assert_eq!(apply_ordering(&g, &swap).unwrap().data(), &[20.0, 10.0]);

        let g = random_grid(GridDims::new(3, 4, 2, 2).unwrap(), 3);
        let id = build_ordering(Scheme::RasterXyz, g.dims()).unwrap();
        assert_eq!(apply_ordering(&g, &id).unwrap().data(), g.data());
    }

    #[test]
    fn apply_preserves_row_multiset() {
        let g = random_grid(GridDims::new(4, 4, 4, 3).unwrap(), 7);
        let mut expected: Vec<Vec<u64>> =
            (0..64).map(|l| g.voxel(l).iter().map(|v| v.to_bits()).collect()).collect();
        expected.sort();
        for s in Scheme::ALL {
            let seq = apply_ordering(&g, &build_ordering(s, g.dims()).unwrap()).unwrap();
            let mut rows: Vec<Vec<u64>> =
                seq.data().chunks(3).map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            rows.sort();
            assert_eq!(rows, expected);
        }
    }

    #[test]
    fn invert_round_trip_and_inverse_labels() {
        let g = random_grid(GridDims::new(8, 8, 4, 2).unwrap(), 11);
        for s in Scheme::ALL {
            let o = build_ordering(s, g.dims()).unwrap();
            let back = invert_ordering(&apply_ordering(&g, &o).unwrap(), &o).unwrap();
            assert_eq!(back, g);

            let n = o.len();
            let seq = SequenceTensor::from_vec(1, n, 1, (0..n).map(|v| v as f64).collect()).unwrap();
            let grid = invert_ordering(&seq, &o).unwrap();
            for l in 0..n {
                assert_eq!(grid.voxel(l)[0], o.linear_to_seq()[l] as f64);
            }
        }
        let constant = FeatureGrid::from_vec(GridDims::new(3, 3, 3, 1).unwrap(), vec![2.5; 27]).unwrap();
        let o = build_ordering(Scheme::Hilbert3d, constant.dims()).unwrap();
        assert_eq!(invert_ordering(&apply_ordering(&constant, &o).unwrap(), &o).unwrap(), constant);
    }

    #[test]
    fn contract_errors() {
        let g = random_grid(GridDims::new(2, 2, 2, 1).unwrap(), 1);
        let o = build_ordering(Scheme::RasterXyz, dims(2, 2, 3)).unwrap();
        assert!(matches!(apply_ordering(&g, &o), Err(Error::Contract(_))));
        let seq = SequenceTensor::from_vec(1, 3, 1, vec![0.0; 3]).unwrap();
        assert!(matches!(invert_ordering(&seq, &o), Err(Error::Contract(_))));
        assert!(Ordering::from_permutation(Scheme::RasterXyz.into(), dims(2, 1, 1), vec![0, 0]).is_err());
        assert!("zigzag".parse::<Scheme>().is_err());
    }

    #[test]
    fn scheme_names_and_codes_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(Scheme::from_code(s.code()), Some(s));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn every_scheme_is_a_permutation(w in 1usize..12, h in 1usize..12, d in 1usize..9, snake in any::<bool>()) {
            for s in Scheme::ALL {
                let o = build_ordering(OrderingScheme { scheme: s, z_snake: snake }, dims(w, h, d)).unwrap();
                let mut seen = o.seq_to_linear().to_vec();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..(w * h * d) as u64).collect::<Vec<_>>());
                for (s_idx, &l) in o.seq_to_linear().iter().enumerate() {
                    prop_assert_eq!(o.linear_to_seq()[l as usize], s_idx as u64);
                }
                if s.is_height_prioritized() {
                    for l in 0..w * h {
                        let first = o.linear_to_seq()[l];
                        let positions: Vec<u64> = (0..d).map(|z| o.linear_to_seq()[l + w * h * z]).collect();
                        let lo = *positions.iter().min().unwrap();
                        let hi = *positions.iter().max().unwrap();
                        prop_assert_eq!(hi - lo, (d - 1) as u64);
                        prop_assert!(first == lo || first == hi);
                    }
                }
            }
        }
    }
}
