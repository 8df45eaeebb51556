//! Channel fusion and the occupancy head: trilinear coarse-to-fine
//! interpolation followed by a per-voxel two-layer perceptron.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::nn::{silu, silu_grad, Linear, Parameters};
use crate::tensor::{FeatureGrid, GridDims};

/// Concatenates along channels, `v_lidar` first.
pub fn fuse_concat(v_lidar: &FeatureGrid, v_camera: &FeatureGrid) -> Result<FeatureGrid> {
    let (a, b) = (v_lidar.dims(), v_camera.dims());
    if !a.same_spatial(&b) {
        return Err(contract(format!("cannot fuse grids of different extent: {a} vs {b}")));
    }
    let dims = a.with_channels(a.c + b.c);
    let mut data = Vec::with_capacity(dims.voxels() * dims.c);
    for l in 0..dims.voxels() {
        data.extend_from_slice(v_lidar.voxel(l));
        data.extend_from_slice(v_camera.voxel(l));
    }
    FeatureGrid::from_vec(dims, data)
}

/// Splits a fused gradient back into its two inputs.
pub fn split_channels(grid: &FeatureGrid, first: usize) -> Result<(FeatureGrid, FeatureGrid)> {
    let dims = grid.dims();
    if first > dims.c {
        return Err(contract(format!("cannot split {} channels at {first}", dims.c)));
    }
    let mut a = Vec::with_capacity(dims.voxels() * first);
    let mut b = Vec::with_capacity(dims.voxels() * (dims.c - first));
    for l in 0..dims.voxels() {
        let v = grid.voxel(l);
        a.extend_from_slice(&v[..first]);
        b.extend_from_slice(&v[first..]);
    }
    Ok((
        FeatureGrid::from_vec(dims.with_channels(first), a)?,
        FeatureGrid::from_vec(dims.with_channels(dims.c - first), b)?,
    ))
}

#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

// Align-corners-false source positions: src = (i + ½)·n_in/n_out − ½,
// clamped to [0, n_in − 1].
fn taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, frac }
        })
        .collect()
}

// View as [outer, n, inner] and resample the middle axis.
fn resample_axis(data: &[f64], outer: usize, n_in: usize, inner: usize, taps: &[Tap]) -> Vec<f64> {
    let n_out = taps.len();
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        for (i, t) in taps.iter().enumerate() {
            let dst = &mut out[(o * n_out + i) * inner..(o * n_out + i + 1) * inner];
            let lo = &data[(o * n_in + t.lo) * inner..(o * n_in + t.lo + 1) * inner];
            if t.frac == 0.0 {
                dst.copy_from_slice(lo);
            } else {
                let hi = &data[(o * n_in + t.hi) * inner..(o * n_in + t.hi + 1) * inner];
                for k in 0..inner {
                    dst[k] = (1.0 - t.frac) * lo[k] + t.frac * hi[k];
                }
            }
        }
    }
    out
}

fn resample_axis_backward(
    dout: &[f64],
    outer: usize,
    n_in: usize,
    inner: usize,
    taps: &[Tap],
) -> Vec<f64> {
    let n_out = taps.len();
    let mut din = vec![0.0; outer * n_in * inner];
    for o in 0..outer {
        for (i, t) in taps.iter().enumerate() {
            let src = &dout[(o * n_out + i) * inner..(o * n_out + i + 1) * inner];
            for k in 0..inner {
                din[(o * n_in + t.lo) * inner + k] += (1.0 - t.frac) * src[k];
                if t.frac != 0.0 {
                    din[(o * n_in + t.hi) * inner + k] += t.frac * src[k];
                }
            }
        }
    }
    din
}

fn check_upsample(source: GridDims, target: GridDims) -> Result<()> {
    if target.w < source.w || target.h < source.h || target.d < source.d {
        return Err(contract(format!(
            "coarse-to-fine target {}x{}x{} is smaller than source {}x{}x{}",
            target.w, target.h, target.d, source.w, source.h, source.d
        )));
    }
    Ok(())
}

/// Trilinear interpolation (align-corners-false) to `target`'s spatial extent.
pub fn coarse_to_fine(grid: &FeatureGrid, target: GridDims) -> Result<FeatureGrid> {
    let s = grid.dims();
    check_upsample(s, target)?;
    let c = s.c;
    let data = resample_axis(grid.data(), s.h * s.d, s.w, c, &taps(s.w, target.w));
    let data = resample_axis(&data, s.d, s.h, target.w * c, &taps(s.h, target.h));
    let data = resample_axis(&data, 1, s.d, target.w * target.h * c, &taps(s.d, target.d));
    FeatureGrid::from_vec(GridDims { c, ..target }, data)
}

/// Gradient of [`coarse_to_fine`] with respect to its input.
pub fn coarse_to_fine_backward(source: GridDims, dout: &FeatureGrid) -> Result<FeatureGrid> {
    let t = dout.dims();
    check_upsample(source, t)?;
    let c = source.c;
    let g = resample_axis_backward(dout.data(), 1, source.d, t.w * t.h * c, &taps(source.d, t.d));
    let g = resample_axis_backward(&g, source.d, source.h, t.w * c, &taps(source.h, t.h));
    let g = resample_axis_backward(&g, source.h * source.d, source.w, c, &taps(source.w, t.w));
    FeatureGrid::from_vec(source, g)
}

/// `linear → SiLU → linear`, hidden width equal to the input width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct MlpCache {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl Mlp {
    pub fn init(in_dim: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Self { fc1: Linear::init(in_dim, in_dim, true, rng), fc2: Linear::init(in_dim, classes, true, rng) }
    }

    pub fn in_dim(&self) -> usize {
        self.fc1.in_dim
    }

    pub fn classes(&self) -> usize {
        self.fc2.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let hidden_pre = self.fc1.forward(x);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| silu(v)).collect();
        let out = self.fc2.forward(&hidden);
        (out, MlpCache { hidden_pre, hidden })
    }

    pub fn backward(&self, x: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let dh = self.fc2.backward(&cache.hidden, dout, &mut grad.fc2);
        let dpre: Vec<f64> = dh.iter().zip(&cache.hidden_pre).map(|(d, p)| d * silu_grad(*p)).collect();
        self.fc1.backward(x, &dpre, &mut grad.fc1)
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.fc1.params();
        v.extend(self.fc2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.fc1.params_mut();
        v.extend(self.fc2.params_mut());
        v
    }
}

/// Per-voxel class logits; class 0 is free space.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyPrediction {
    logits: FeatureGrid,
}

impl OccupancyPrediction {
    pub fn new(logits: FeatureGrid) -> Result<Self> {
        if logits.channels() < 2 {
            return Err(contract("occupancy prediction needs at least two classes"));
        }
        Ok(Self { logits })
    }

    pub fn dims(&self) -> GridDims {
        self.logits.dims()
    }

    pub fn num_classes(&self) -> usize {
        self.logits.channels()
    }

    pub fn logits(&self) -> &FeatureGrid {
        &self.logits
    }

    /// Argmax class per voxel (lowest index wins ties).
    pub fn labels(&self) -> Vec<u16> {
        let k = self.num_classes();
        self.logits
            .data()
            .chunks_exact(k)
            .map(|row| {
                let mut best = 0;
                for i in 1..k {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                best as u16
            })
            .collect()
    }
}

pub fn classify(grid: &FeatureGrid, mlp: &Mlp, classes: usize) -> Result<OccupancyPrediction> {
    if grid.channels() != mlp.in_dim() {
        return Err(contract(format!(
            "classifier expects {} channels, got {}",
            mlp.in_dim(),
            grid.channels()
        )));
    }
    if classes != mlp.classes() {
        return Err(contract(format!("classifier emits {} classes, asked for {classes}", mlp.classes())));
    }
    let (logits, _) = mlp.forward(grid.data());
    OccupancyPrediction::new(FeatureGrid::from_vec(grid.dims().with_channels(classes), logits)?)
}
