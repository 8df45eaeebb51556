//! Procedural occupancy scenes for desk-scale training and evaluation.
//!
//! Labels: 0 empty, 1 ground slab at `z = 0`, 2 boxes resting on or floating
//! above the ground, 3 thin vertical columns. The top layer stays empty when
//! the grid has at least three layers. Classes at or above 4 are never drawn.
//!
//! Features are a fixed linear embedding of the one-hot labels plus Gaussian
//! noise. The embedding depends only on `K` and `C`, so every scene of a
//! task shares it; the scene seed drives geometry and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::tensor::{FeatureGrid, GridDims};

const EMBEDDING_SEED: u64 = 0x766f_7873_6571_0001;

pub const EMPTY: u16 = 0;
pub const GROUND: u16 = 1;
pub const BOX: u16 = 2;
pub const COLUMN: u16 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Embedding {
    /// Fixed Gaussian `K × C` matrix with entries of unit variance.
    Random,
    /// One-hot features; requires `C == K`.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneOptions {
    pub channels: usize,
    pub noise_sigma: f64,
    pub embedding: Embedding,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self { channels: 8, noise_sigma: 0.5, embedding: Embedding::Random }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub features: FeatureGrid,
    pub labels: Vec<u16>,
    pub seed: u64,
}

/// `K × C` row-major embedding shared by all scenes with these sizes.
pub fn embedding_matrix(k: usize, channels: usize, kind: Embedding) -> Result<Vec<f64>> {
    match kind {
        Embedding::Identity => {
            if channels != k {
                return Err(contract(format!("identity embedding needs C == K, got C={channels}, K={k}")));
            }
            let mut m = vec![0.0; k * k];
            (0..k).for_each(|i| m[i * k + i] = 1.0);
            Ok(m)
        }
        Embedding::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(EMBEDDING_SEED ^ ((k as u64) << 32) ^ channels as u64);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            Ok((0..k * channels).map(|_| normal.sample(&mut rng)).collect())
        }
    }
}

fn paint(labels: &mut [u16], dims: GridDims, lo: [usize; 3], hi: [usize; 3], class: u16, only_empty: bool) {
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for x in lo[0]..hi[0] {
                let cell = &mut labels[dims.linear(x, y, z)];
                if !only_empty || *cell == EMPTY {
                    *cell = class;
                }
            }
        }
    }
}

fn scene_labels(dims: GridDims, rng: &mut ChaCha8Rng) -> Vec<u16> {
    let (w, h, d) = (dims.w, dims.h, dims.d);
    let mut labels = vec![EMPTY; dims.voxels()];
    paint(&mut labels, dims, [0, 0, 0], [w, h, 1], GROUND, false);
    // objects live in z ∈ [1, top)
    let top = if d >= 3 { d - 1 } else { d };
    if top <= 1 {
        return labels;
    }

    // columns first, each 1×1, at most 3; boxes are at least 2×2 where the
    // grid allows, so a box can never be hidden entirely by columns
    let columns = rng.random_range(1..=3);
    for _ in 0..columns {
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        let height = rng.random_range(1..top);
        paint(&mut labels, dims, [x, y, 1], [x + 1, y + 1, 1 + height], COLUMN, false);
    }
    let boxes = rng.random_range(1..=4);
    for _ in 0..boxes {
        let side = |n: usize, rng: &mut ChaCha8Rng| rng.random_range(n.min(2)..=(n / 3).max(n.min(2)));
        let (bw, bh) = (side(w, rng), side(h, rng));
        let bd = rng.random_range(1..=(top - 1).min(3));
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        let z0 = rng.random_range(1..=top - bd);
        paint(&mut labels, dims, [x0, y0, z0], [x0 + bw, y0 + bh, z0 + bd], BOX, true);
    }
    labels
}

pub fn generate_scene(seed: u64, dims: GridDims, k: usize) -> Result<SceneSample> {
    generate_scene_with(seed, dims, k, &SceneOptions::default())
}

pub fn generate_scene_with(seed: u64, dims: GridDims, k: usize, options: &SceneOptions) -> Result<SceneSample> {
    if k < 4 {
        return Err(contract(format!("synthetic scenes need K >= 4, got {k}")));
    }
    if !(options.noise_sigma >= 0.0 && options.noise_sigma.is_finite()) {
        return Err(contract(format!("noise sigma must be finite and >= 0, got {}", options.noise_sigma)));
    }
    let c = options.channels;
    let embed = embedding_matrix(k, c, options.embedding)?;
    let dims = dims.with_channels(c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = scene_labels(dims, &mut rng);

    let mut features = FeatureGrid::zeros(dims);
    let noise = Normal::new(0.0, options.noise_sigma).map_err(|e| contract(e.to_string()))?;
    for (v, &label) in labels.iter().enumerate() {
        let row = &embed[label as usize * c..(label as usize + 1) * c];
        for (f, e) in features.voxel_mut(v).iter_mut().zip(row) {
            *f = if options.noise_sigma > 0.0 { e + noise.sample(&mut rng) } else { *e };
        }
    }
    Ok(SceneSample { features, labels, seed })
}
