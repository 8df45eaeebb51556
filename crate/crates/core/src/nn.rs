//! Small dense layers with hand-written reverse-mode gradients.
//!
//! Activations are flat row-major `rows × dim` buffers. Every `backward`
//! accumulates parameter gradients into a gradient struct of the same type
//! as the layer and returns the input gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// A set of trainable tensors. Gradient sets share the parameter type.
pub trait Parameters: Clone {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    /// Same shapes, every entry zero.
    fn zeroed(&self) -> Self {
        let mut g = self.clone();
        for p in g.params_mut() {
            p.fill(0.0);
        }
        g
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// `self -= lr · grads`
    fn sgd_step(&mut self, grads: &Self, lr: f64) {
        for (p, g) in self.params_mut().into_iter().zip(grads.params()) {
            p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (p, g) in self.params_mut().into_iter().zip(other.params()) {
            p.iter_mut().zip(g).for_each(|(p, g)| *p += g);
        }
    }

    /// Flattened copy of every parameter, in `params()` order.
    fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `ln(1 + e^x)`, overflow-safe.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of softplus for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

pub(crate) fn uniform(rng: &mut impl Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// `y = x·W (+ b)`, `W` stored `in_dim × out_dim` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize, with_bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: with_bias.then(|| vec![0.0; out_dim]),
        }
    }

    /// Square identity map, no bias.
    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim, dim, false);
        for i in 0..dim {
            l.weight[i * dim + i] = 1.0;
        }
        l
    }

    /// Uniform `±1/√in_dim` weights; bias (if any) likewise.
    pub fn init(in_dim: usize, out_dim: usize, with_bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            in_dim,
            out_dim,
            weight: uniform(rng, in_dim * out_dim, bound),
            bias: with_bias.then(|| uniform(rng, out_dim, bound)),
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<usize> {
        if self.in_dim == 0 || x.len() % self.in_dim != 0 {
            return Err(contract(format!(
                "linear layer expects rows of width {}, got {} values",
                self.in_dim,
                x.len()
            )));
        }
        Ok(x.len() / self.in_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let rows = x.len() / self.in_dim;
        let mut y = vec![0.0; rows * self.out_dim];
        for (xr, yr) in x.chunks_exact(self.in_dim).zip(y.chunks_exact_mut(self.out_dim)) {
            if let Some(b) = &self.bias {
                yr.copy_from_slice(b);
            }
            for (i, &xi) in xr.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wr = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
                yr.iter_mut().zip(wr).for_each(|(y, w)| *y += xi * w);
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        for ((xr, dyr), dxr) in x
            .chunks_exact(self.in_dim)
            .zip(dy.chunks_exact(self.out_dim))
            .zip(dx.chunks_exact_mut(self.in_dim))
        {
            if let Some(gb) = &mut grad.bias {
                gb.iter_mut().zip(dyr).for_each(|(g, d)| *g += d);
            }
            for i in 0..self.in_dim {
                let wr = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
                dxr[i] = wr.iter().zip(dyr).map(|(w, d)| w * d).sum();
                let gw = &mut grad.weight[i * self.out_dim..(i + 1) * self.out_dim];
                let xi = xr[i];
                gw.iter_mut().zip(dyr).for_each(|(g, d)| *g += xi * d);
            }
        }
        dx
    }
}

impl Parameters for Linear {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = vec![self.weight.as_slice()];
        if let Some(b) = &self.bias {
            v.push(b);
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.weight.as_mut_slice()];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

/// Per-row normalization over the channel axis with learned gain and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub dim: usize,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub eps: f64,
}

#[derive(Default)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self { dim, gain: vec![1.0; dim], bias: vec![0.0; dim], eps: 1e-5 }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let rows = x.len() / self.dim;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut rstd = vec![0.0; rows];
        for (r, xr) in x.chunks_exact(self.dim).enumerate() {
            let mean = xr.iter().sum::<f64>() / self.dim as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.dim as f64;
            let rs = 1.0 / (var + self.eps).sqrt();
            rstd[r] = rs;
            for i in 0..self.dim {
                let h = (xr[i] - mean) * rs;
                xhat[r * self.dim + i] = h;
                y[r * self.dim + i] = h * self.gain[i] + self.bias[i];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &[f64], grad: &mut LayerNorm) -> Vec<f64> {
        let dim = self.dim;
        let mut dx = vec![0.0; dy.len()];
        let mut dxhat = vec![0.0; dim];
        for (r, dyr) in dy.chunks_exact(dim).enumerate() {
            let xh = &cache.xhat[r * dim..(r + 1) * dim];
            for i in 0..dim {
                grad.gain[i] += dyr[i] * xh[i];
                grad.bias[i] += dyr[i];
                dxhat[i] = dyr[i] * self.gain[i];
            }
            let mean_d = dxhat.iter().sum::<f64>() / dim as f64;
            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / dim as f64;
            let rs = cache.rstd[r];
            for i in 0..dim {
                dx[r * dim + i] = rs * (dxhat[i] - mean_d - xh[i] * mean_dx);
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.gain, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.gain, &mut self.bias]
    }
}

/// Depthwise causal 1D convolution (left zero padding of `width − 1`).
///
/// `y[t, ch] = Σ_j kernel[ch, j] · x[t − (width − 1) + j, ch]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalConv1d {
    pub channels: usize,
    pub width: usize,
    pub kernel: Vec<f64>,
}

impl CausalConv1d {
    pub fn zeros(channels: usize, width: usize) -> Self {
        Self { channels, width, kernel: vec![0.0; channels * width] }
    }

    pub fn init(channels: usize, width: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (width as f64).sqrt();
        Self { channels, width, kernel: uniform(rng, channels * width, bound) }
    }

    /// Convolves one `n × channels` sequence.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let c = self.channels;
        let n = x.len() / c;
        let k = self.width;
        let mut y = vec![0.0; x.len()];
        for t in 0..n {
            let yr = &mut y[t * c..(t + 1) * c];
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(k - 1) else { continue };
                let xr = &x[src * c..(src + 1) * c];
                for ch in 0..c {
                    yr[ch] += self.kernel[ch * k + j] * xr[ch];
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut CausalConv1d) -> Vec<f64> {
        let c = self.channels;
        let n = x.len() / c;
        let k = self.width;
        let mut dx = vec![0.0; x.len()];
        for t in 0..n {
            let dyr = &dy[t * c..(t + 1) * c];
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(k - 1) else { continue };
                for ch in 0..c {
                    grad.kernel[ch * k + j] += dyr[ch] * x[src * c + ch];
                    dx[src * c + ch] += dyr[ch] * self.kernel[ch * k + j];
                }
            }
        }
        dx
    }
}

impl Parameters for CausalConv1d {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.kernel]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.kernel]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations() {
        assert_eq!(silu(0.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        for &y in &[0.01, 0.1, 1.0, 5.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-12);
        }
        let h = 1e-6;
        for &x in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_identity_and_bias() {
        let mut l = Linear::identity(3);
        assert_eq!(l.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        l.bias = Some(vec![1.0, 0.0, -1.0]);
        assert_eq!(l.forward(&[0.0, 0.0, 0.0]), vec![1.0, 0.0, -1.0]);
        assert!(l.check_input(&[0.0; 4]).is_err());
    }

    #[test]
    fn layer_norm_normalizes() {
        let ln = LayerNorm::new(4);
        let (y, _) = ln.forward(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn causal_conv_taps() {
        let conv = CausalConv1d { channels: 1, width: 3, kernel: vec![0.25, 0.5, 1.0] };
        // y_t = x_t + 0.5 x_{t-1} + 0.25 x_{t-2}
        assert_eq!(conv.forward(&[1.0, 0.0, 0.0, 2.0]), vec![1.0, 0.5, 0.25, 2.0]);
    }

    #[test]
    fn sgd_and_zeroed() {
        let mut l = Linear::identity(2);
        let mut g = l.zeroed();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        g.weight[1] = 2.0;
        l.sgd_step(&g, 0.5);
        assert_eq!(l.weight, vec![1.0, -1.0, 0.0, 1.0]);
        assert_eq!(l.num_params(), 4);
    }
}
