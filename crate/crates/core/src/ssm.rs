//! Diagonal state-space scans.
//!
//! Every channel carries its own `state_dim`-wide hidden state:
//!
//! ```text
//! h_k = Ā ⊙ h_{k-1} + B̄ x_k
//! y_k = ⟨C̄, h_k⟩
//! ```
//!
//! with `h_0 = 0`. The continuous transition is `A = −exp(A_log)`;
//! discretization uses zero-order hold for `A` (`Ā = exp(Δ·A)`) and the
//! Euler rule for `B` (`B̄ = Δ·B`).
//!
//! In selective mode `B`, `C` and `Δ` are computed from each token `u_k`:
//! `B_k = u_k·W_B`, `C_k = u_k·W_C`, `Δ_k = softplus(u_k·w_Δ + b_Δ)`, with
//! one scalar `Δ_k` shared by all channels.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::nn::{self, sigmoid, softplus, Parameters};
use crate::tensor::SequenceTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub channels: usize,
    pub state_dim: usize,
    /// `channels × state_dim`; `A = −exp(A_log)`.
    pub a_log: Vec<f64>,
    /// Fixed-mode input vector, `state_dim`.
    pub b: Vec<f64>,
    /// Fixed-mode readout vector, `state_dim`.
    pub c_out: Vec<f64>,
    /// Fixed-mode step size.
    pub delta: f64,
    /// `channels × state_dim`
    pub w_b: Vec<f64>,
    /// `channels × state_dim`
    pub w_c: Vec<f64>,
    /// `channels`
    pub w_delta: Vec<f64>,
    pub bias_delta: f64,
}

impl SsmParams {
    pub fn zeros(channels: usize, state_dim: usize) -> Self {
        Self {
            channels,
            state_dim,
            a_log: vec![0.0; channels * state_dim],
            b: vec![0.0; state_dim],
            c_out: vec![0.0; state_dim],
            delta: 0.0,
            w_b: vec![0.0; channels * state_dim],
            w_c: vec![0.0; channels * state_dim],
            w_delta: vec![0.0; channels],
            bias_delta: 0.0,
        }
    }

    pub fn init(channels: usize, state_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (channels.max(1) as f64).sqrt();
        let a_log = (0..channels * state_dim).map(|_| rng.random_range(0.5f64..1.5).ln()).collect();
        // initial step between 0.01 and 0.1, log-uniform
        let dt = (rng.random_range(0.01f64.ln()..0.1f64.ln())).exp();
        Self {
            channels,
            state_dim,
            a_log,
            b: vec![1.0; state_dim],
            c_out: nn::uniform(rng, state_dim, 1.0 / (state_dim as f64).sqrt()),
            delta: 0.1,
            w_b: nn::uniform(rng, channels * state_dim, bound),
            w_c: nn::uniform(rng, channels * state_dim, bound),
            w_delta: nn::uniform(rng, channels, bound),
            bias_delta: nn::softplus_inverse(dt),
        }
    }

    /// `A = −exp(A_log)`, `channels × state_dim`.
    pub fn transition(&self) -> Vec<f64> {
        self.a_log.iter().map(|v| -v.exp()).collect()
    }

    /// Fixed-mode discretization at `self.delta` for every channel, with
    /// `C̄` broadcast from `c_out`.
    pub fn fixed_discretization(&self) -> Result<DiscreteSsm> {
        discretize(self, &vec![self.delta; self.channels])
    }

    fn check_input(&self, u: &SequenceTensor) -> Result<()> {
        if u.channels() != self.channels {
            return Err(contract(format!(
                "selective SSM over {} channels got input with {}",
                self.channels,
                u.channels()
            )));
        }
        u.check_finite()
    }

    /// Selective scan of one `n × channels` sequence.
    pub fn selective_scan(&self, u: &[f64], mut cache: Option<&mut SelectiveCache>) -> Vec<f64> {
        let (c, s) = (self.channels, self.state_dim);
        let n = u.len() / c;
        let a = self.transition();
        let mut h = vec![0.0; c * s];
        let mut y = vec![0.0; u.len()];
        let mut bk = vec![0.0; s];
        let mut ck = vec![0.0; s];
        if let Some(cache) = cache.as_deref_mut() {
            cache.reset(n, c, s);
        }
        for k in 0..n {
            let uk = &u[k * c..(k + 1) * c];
            let p = uk.iter().zip(&self.w_delta).map(|(a, b)| a * b).sum::<f64>() + self.bias_delta;
            let dt = softplus(p);
            bk.fill(0.0);
            ck.fill(0.0);
            for ch in 0..c {
                let x = uk[ch];
                let wb = &self.w_b[ch * s..(ch + 1) * s];
                let wc = &self.w_c[ch * s..(ch + 1) * s];
                for j in 0..s {
                    bk[j] += x * wb[j];
                    ck[j] += x * wc[j];
                }
            }
            let yk = &mut y[k * c..(k + 1) * c];
            for ch in 0..c {
                let x = uk[ch];
                let hr = &mut h[ch * s..(ch + 1) * s];
                let ar = &a[ch * s..(ch + 1) * s];
                let mut acc = 0.0;
                for j in 0..s {
                    hr[j] = (dt * ar[j]).exp() * hr[j] + dt * bk[j] * x;
                    acc += ck[j] * hr[j];
                }
                yk[ch] = acc;
            }
            if let Some(cache) = cache.as_deref_mut() {
                cache.p[k] = p;
                cache.delta[k] = dt;
                cache.bk[k * s..(k + 1) * s].copy_from_slice(&bk);
                cache.ck[k * s..(k + 1) * s].copy_from_slice(&ck);
                cache.h[k * c * s..(k + 1) * c * s].copy_from_slice(&h);
            }
        }
        y
    }

    /// Reverse pass of [`SsmParams::selective_scan`], right to left over
    /// the saved hidden states. Returns `dL/du`.
    pub fn selective_backward(
        &self,
        u: &[f64],
        cache: &SelectiveCache,
        dy: &[f64],
        grad: &mut SsmParams,
    ) -> Vec<f64> {
        let (c, s) = (self.channels, self.state_dim);
        let n = u.len() / c;
        let a = self.transition();
        let mut da = vec![0.0; c * s];
        let mut carry = vec![0.0; c * s];
        let mut du = vec![0.0; u.len()];
        let mut dbk = vec![0.0; s];
        let mut dck = vec![0.0; s];
        let zeros = vec![0.0; c * s];
        for k in (0..n).rev() {
            let uk = &u[k * c..(k + 1) * c];
            let dyk = &dy[k * c..(k + 1) * c];
            let dt = cache.delta[k];
            let bk = &cache.bk[k * s..(k + 1) * s];
            let ck = &cache.ck[k * s..(k + 1) * s];
            let hk = &cache.h[k * c * s..(k + 1) * c * s];
            let hprev = if k > 0 { &cache.h[(k - 1) * c * s..k * c * s] } else { &zeros[..] };
            dbk.fill(0.0);
            dck.fill(0.0);
            let mut ddt = 0.0;
            let duk = &mut du[k * c..(k + 1) * c];
            for ch in 0..c {
                let x = uk[ch];
                let mut dx = 0.0;
                for j in 0..s {
                    let idx = ch * s + j;
                    dck[j] += dyk[ch] * hk[idx];
                    let g = carry[idx] + dyk[ch] * ck[j];
                    let at = (dt * a[idx]).exp();
                    ddt += g * (at * a[idx] * hprev[idx] + bk[j] * x);
                    da[idx] += g * at * dt * hprev[idx];
                    dbk[j] += g * dt * x;
                    dx += g * dt * bk[j];
                    carry[idx] = at * g;
                }
                duk[ch] += dx;
            }
            let dp = ddt * sigmoid(cache.p[k]);
            grad.bias_delta += dp;
            for ch in 0..c {
                let x = uk[ch];
                grad.w_delta[ch] += dp * x;
                let wb = &self.w_b[ch * s..(ch + 1) * s];
                let wc = &self.w_c[ch * s..(ch + 1) * s];
                let gwb = &mut grad.w_b[ch * s..(ch + 1) * s];
                let mut dx = dp * self.w_delta[ch];
                for j in 0..s {
                    gwb[j] += x * dbk[j];
                    dx += wb[j] * dbk[j] + wc[j] * dck[j];
                }
                let gwc = &mut grad.w_c[ch * s..(ch + 1) * s];
                for j in 0..s {
                    gwc[j] += x * dck[j];
                }
                duk[ch] += dx;
            }
        }
        for idx in 0..c * s {
            grad.a_log[idx] += da[idx] * a[idx];
        }
        du
    }
}

impl Parameters for SsmParams {
    fn params(&self) -> Vec<&[f64]> {
        vec![
            &self.a_log,
            &self.b,
            &self.c_out,
            std::slice::from_ref(&self.delta),
            &self.w_b,
            &self.w_c,
            &self.w_delta,
            std::slice::from_ref(&self.bias_delta),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.a_log,
            &mut self.b,
            &mut self.c_out,
            std::slice::from_mut(&mut self.delta),
            &mut self.w_b,
            &mut self.w_c,
            &mut self.w_delta,
            std::slice::from_mut(&mut self.bias_delta),
        ]
    }
}

/// Saved activations of one selective scan.
#[derive(Default)]
pub struct SelectiveCache {
    p: Vec<f64>,
    delta: Vec<f64>,
    bk: Vec<f64>,
    ck: Vec<f64>,
    h: Vec<f64>,
}

impl SelectiveCache {
    fn reset(&mut self, n: usize, c: usize, s: usize) {
        self.p = vec![0.0; n];
        self.delta = vec![0.0; n];
        self.bk = vec![0.0; n * s];
        self.ck = vec![0.0; n * s];
        self.h = vec![0.0; n * c * s];
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }
}

/// Discretized per-channel diagonal SSM, every field `channels × state_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSsm {
    pub channels: usize,
    pub state_dim: usize,
    pub abar: Vec<f64>,
    pub bbar: Vec<f64>,
    pub cbar: Vec<f64>,
}

impl DiscreteSsm {
    pub fn zeros(channels: usize, state_dim: usize) -> Self {
        let len = channels * state_dim;
        Self { channels, state_dim, abar: vec![0.0; len], bbar: vec![0.0; len], cbar: vec![0.0; len] }
    }

    /// The same scalars for every channel and state slot.
    pub fn uniform(channels: usize, state_dim: usize, abar: f64, bbar: f64, cbar: f64) -> Self {
        let len = channels * state_dim;
        Self {
            channels,
            state_dim,
            abar: vec![abar; len],
            bbar: vec![bbar; len],
            cbar: vec![cbar; len],
        }
    }

    fn check(&self, x: &SequenceTensor) -> Result<()> {
        let len = self.channels * self.state_dim;
        if self.abar.len() != len || self.bbar.len() != len || self.cbar.len() != len {
            return Err(contract("discretized SSM arrays must be channels × state_dim"));
        }
        if x.channels() != self.channels {
            return Err(contract(format!(
                "scan over {} channels got input with {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    fn scan_sequence(&self, x: &[f64], states: Option<&mut Vec<f64>>) -> Vec<f64> {
        let (c, s) = (self.channels, self.state_dim);
        let n = x.len() / c;
        let mut h = vec![0.0; c * s];
        let mut y = vec![0.0; x.len()];
        let mut saved = states;
        for k in 0..n {
            for ch in 0..c {
                let xv = x[k * c + ch];
                let mut acc = 0.0;
                for j in 0..s {
                    let idx = ch * s + j;
                    h[idx] = self.abar[idx] * h[idx] + self.bbar[idx] * xv;
                    acc += self.cbar[idx] * h[idx];
                }
                y[k * c + ch] = acc;
            }
            if let Some(buf) = saved.as_deref_mut() {
                buf.extend_from_slice(&h);
            }
        }
        y
    }
}

impl Parameters for DiscreteSsm {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.abar, &self.bbar, &self.cbar]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.abar, &mut self.bbar, &mut self.cbar]
    }
}

/// `Ā = exp(Δ·A)`, `B̄ = Δ·B` per channel; `C̄` is `c_out` broadcast.
pub fn discretize(params: &SsmParams, delta: &[f64]) -> Result<DiscreteSsm> {
    if delta.len() != params.channels {
        return Err(contract(format!(
            "need one step size per channel ({}), got {}",
            params.channels,
            delta.len()
        )));
    }
    if let Some(bad) = delta.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(contract(format!("step size must be positive, got {bad}")));
    }
    let (c, s) = (params.channels, params.state_dim);
    let a = params.transition();
    let mut out = DiscreteSsm::zeros(c, s);
    for ch in 0..c {
        for j in 0..s {
            let idx = ch * s + j;
            out.abar[idx] = (delta[ch] * a[idx]).exp();
            out.bbar[idx] = delta[ch] * params.b[j];
            out.cbar[idx] = params.c_out[j];
        }
    }
    Ok(out)
}

pub fn ssm_scan(ssm: &DiscreteSsm, x: &SequenceTensor) -> Result<SequenceTensor> {
    ssm.check(x)?;
    let (b, n, c) = x.shape();
    let data: Vec<f64> = (0..b)
        .into_par_iter()
        .flat_map_iter(|bi| ssm.scan_sequence(x.sequence(bi), None))
        .collect();
    SequenceTensor::from_vec(b, n, c, data)
}

/// Gradients of `Σ upstream ⊙ ssm_scan(ssm, x)` with respect to the
/// discretized arrays and the input.
pub fn ssm_scan_backward(
    ssm: &DiscreteSsm,
    x: &SequenceTensor,
    upstream: &SequenceTensor,
) -> Result<(DiscreteSsm, SequenceTensor)> {
    ssm.check(x)?;
    if upstream.shape() != x.shape() {
        return Err(contract("upstream gradient shape differs from scan output"));
    }
    let (b, n, c) = x.shape();
    let s = ssm.state_dim;
    let mut grad = DiscreteSsm::zeros(c, s);
    let mut dx = SequenceTensor::zeros(b, n, c);
    for bi in 0..b {
        let xs = x.sequence(bi);
        let dy = upstream.sequence(bi);
        let mut states = Vec::with_capacity(n * c * s);
        ssm.scan_sequence(xs, Some(&mut states));
        let mut carry = vec![0.0; c * s];
        let dxs = dx.sequence_mut(bi);
        for k in (0..n).rev() {
            for ch in 0..c {
                let xv = xs[k * c + ch];
                let mut dxv = 0.0;
                for j in 0..s {
                    let idx = ch * s + j;
                    let hk = states[k * c * s + idx];
                    let hprev = if k > 0 { states[(k - 1) * c * s + idx] } else { 0.0 };
                    grad.cbar[idx] += dy[k * c + ch] * hk;
                    let g = carry[idx] + dy[k * c + ch] * ssm.cbar[idx];
                    grad.abar[idx] += g * hprev;
                    grad.bbar[idx] += g * xv;
                    dxv += g * ssm.bbar[idx];
                    carry[idx] = ssm.abar[idx] * g;
                }
                dxs[k * c + ch] = dxv;
            }
        }
    }
    Ok((grad, dx))
}

pub fn selective_ssm_forward(params: &SsmParams, u: &SequenceTensor) -> Result<SequenceTensor> {
    params.check_input(u)?;
    let (b, n, c) = u.shape();
    let data: Vec<f64> = (0..b)
        .into_par_iter()
        .flat_map_iter(|bi| params.selective_scan(u.sequence(bi), None))
        .collect();
    SequenceTensor::from_vec(b, n, c, data)
}

/// Parameter and input gradients of `Σ upstream ⊙ selective_ssm_forward(params, u)`.
pub fn selective_ssm_backward(
    params: &SsmParams,
    u: &SequenceTensor,
    upstream: &SequenceTensor,
) -> Result<(SsmParams, SequenceTensor)> {
    params.check_input(u)?;
    if upstream.shape() != u.shape() {
        return Err(contract("upstream gradient shape differs from selective SSM output"));
    }
    let (b, n, c) = u.shape();
    let mut grad = params.zeroed();
    let mut du = Vec::with_capacity(b * n * c);
    for bi in 0..b {
        let mut cache = SelectiveCache::default();
        params.selective_scan(u.sequence(bi), Some(&mut cache));
        du.extend(params.selective_backward(u.sequence(bi), &cache, upstream.sequence(bi), &mut grad));
    }
    Ok((grad, SequenceTensor::from_vec(b, n, c, du)?))
}
