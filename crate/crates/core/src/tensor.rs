//! Dense voxel grids and batched sequences.

use serde::{Deserialize, Serialize};

use crate::error::{contract, range, Result};

/// Largest voxel count a grid may hold (2^40).
pub const MAX_VOXELS: u64 = 1 << 40;

/// Spatial extent `w × h × d` plus channel count `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    pub c: usize,
}

impl GridDims {
    pub fn new(w: usize, h: usize, d: usize, c: usize) -> Result<Self> {
        if w == 0 || h == 0 || d == 0 {
            return Err(range(format!("spatial dims must be positive, got {w}x{h}x{d}")));
        }
        let n = (w as u128) * (h as u128) * (d as u128);
        if n > u128::from(MAX_VOXELS) {
            return Err(range(format!("{w}x{h}x{d} exceeds 2^40 voxels")));
        }
        Ok(Self { w, h, d, c })
    }

    pub fn spatial(w: usize, h: usize, d: usize) -> Result<Self> {
        Self::new(w, h, d, 0)
    }

    pub fn voxels(&self) -> usize {
        self.w * self.h * self.d
    }

    pub fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub fn same_spatial(&self, other: &GridDims) -> bool {
        (self.w, self.h, self.d) == (other.w, other.h, other.d)
    }

    /// `L = x + w·(y + h·z)`
    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.w * (y + self.h * z)
    }

    #[inline]
    pub fn coord(&self, linear: usize) -> (usize, usize, usize) {
        let x = linear % self.w;
        let rest = linear / self.w;
        (x, rest % self.h, rest / self.h)
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.w, self.h, self.d, self.c)
    }
}

/// Dense `w × h × d × c` feature volume, channels contiguous per voxel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    dims: GridDims,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(dims: GridDims) -> Self {
        Self { dims, data: vec![0.0; dims.voxels() * dims.c] }
    }

    pub fn from_vec(dims: GridDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.voxels() * dims.c {
            return Err(contract(format!(
                "grid {dims} needs {} values, got {}",
                dims.voxels() * dims.c,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn voxel(&self, linear: usize) -> &[f64] {
        let c = self.dims.c;
        &self.data[linear * c..(linear + 1) * c]
    }

    pub fn voxel_mut(&mut self, linear: usize) -> &mut [f64] {
        let c = self.dims.c;
        &mut self.data[linear * c..(linear + 1) * c]
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> &[f64] {
        self.voxel(self.dims.linear(x, y, z))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `b × n × c` batch of sequences, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTensor {
    b: usize,
    n: usize,
    c: usize,
    data: Vec<f64>,
}

impl SequenceTensor {
    pub fn zeros(b: usize, n: usize, c: usize) -> Self {
        Self { b, n, c, data: vec![0.0; b * n * c] }
    }

    pub fn from_vec(b: usize, n: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if b == 0 || n == 0 || c == 0 {
            return Err(contract(format!("sequence shape must be positive, got {b}x{n}x{c}")));
        }
        if data.len() != b * n * c {
            return Err(contract(format!(
                "sequence {b}x{n}x{c} needs {} values, got {}",
                b * n * c,
                data.len()
            )));
        }
        Ok(Self { b, n, c, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.b, self.n, self.c)
    }

    pub fn batch(&self) -> usize {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The `n × c` slab of one batch element.
    pub fn sequence(&self, b: usize) -> &[f64] {
        let len = self.n * self.c;
        &self.data[b * len..(b + 1) * len]
    }

    pub fn sequence_mut(&mut self, b: usize) -> &mut [f64] {
        let len = self.n * self.c;
        &mut self.data[b * len..(b + 1) * len]
    }

    pub fn token(&self, b: usize, k: usize) -> &[f64] {
        let start = (b * self.n + k) * self.c;
        &self.data[start..start + self.c]
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(crate::Error::Numeric(format!("non-finite input at flat offset {pos}")));
        }
        Ok(())
    }
}
