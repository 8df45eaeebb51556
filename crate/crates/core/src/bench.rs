//! Wall-clock scaling of the Mamba block forward pass with sequence length.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{contract, Result};
use crate::mamba::{mamba_block_forward, MambaBlockParams, MambaConfig};
use crate::nn::uniform;
use crate::tensor::SequenceTensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub mean_ns: f64,
    /// Population standard deviation; 0 for a single repeat.
    pub stddev_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub channels: usize,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln mean_ns` against `ln n`.
    pub slope: f64,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(contract("slope needs at least two points with positive coordinates"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(contract("slope needs at least two distinct lengths"));
    }
    Ok(sxy / sxx)
}

/// Times one block (`state_dim` 16, expansion 2) over each length.
pub fn bench_block(lengths: &[usize], channels: usize, repeats: usize, seed: u64) -> Result<BenchReport> {
    if lengths.len() < 3 {
        return Err(contract(format!("need at least 3 lengths, got {}", lengths.len())));
    }
    if repeats == 0 || channels == 0 || lengths.contains(&0) {
        return Err(contract("repeats, channels and lengths must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = MambaBlockParams::init(MambaConfig::new(channels), &mut rng)?;
    let mut rows = Vec::with_capacity(lengths.len());
    for &n in lengths {
        let x = SequenceTensor::from_vec(1, n, channels, uniform(&mut rng, n * channels, 1.0))?;
        // warm caches and the allocator once
        std::hint::black_box(mamba_block_forward(&block, &x)?);
        let samples: Vec<f64> = (0..repeats)
            .map(|_| {
                let t = Instant::now();
                let y = mamba_block_forward(&block, &x);
                let ns = t.elapsed().as_nanos() as f64;
                std::hint::black_box(y).map(|_| ns)
            })
            .collect::<Result<_>>()?;
        let mean = samples.iter().sum::<f64>() / repeats as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / repeats as f64;
        rows.push(BenchRow { n, mean_ns: mean, stddev_ns: var.sqrt() });
    }
    let slope = log_log_slope(&rows.iter().map(|r| (r.n as f64, r.mean_ns)).collect::<Vec<_>>())?;
    Ok(BenchReport { channels, repeats, rows, slope })
}
