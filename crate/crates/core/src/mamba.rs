//! The Mamba block:
//!
//! ```text
//! v1  = LN(v)
//! v2  = SelectiveSSM(SiLU(Conv1d(v1·W_main)))
//! out = v + (v2 ⊙ SiLU(v1·W_gate))·W_out
//! ```
//!
//! The convolution is depthwise and causal, so the block maps an `n × c`
//! sequence to an `n × c` sequence.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::nn::{silu, silu_grad, CausalConv1d, LayerNorm, LayerNormCache, Linear, Parameters};
use crate::ssm::{SelectiveCache, SsmParams};
use crate::tensor::SequenceTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MambaConfig {
    pub model_dim: usize,
    /// Inner width; conventionally `2 · model_dim`.
    pub expand_dim: usize,
    pub state_dim: usize,
    pub conv_width: usize,
}

impl MambaConfig {
    pub fn new(model_dim: usize) -> Self {
        Self { model_dim, expand_dim: 2 * model_dim, state_dim: 16, conv_width: 4 }
    }

    pub fn with_state_dim(self, state_dim: usize) -> Self {
        Self { state_dim, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.expand_dim == 0 || self.state_dim == 0 || self.conv_width == 0 {
            return Err(contract(format!("invalid block config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MambaBlockParams {
    pub model_dim: usize,
    pub expand_dim: usize,
    pub ln: LayerNorm,
    pub in_proj_main: Linear,
    pub in_proj_gate: Linear,
    pub conv: CausalConv1d,
    pub ssm: SsmParams,
    pub out_proj: Linear,
}

/// Saved activations of one block application to one sequence.
#[derive(Default)]
pub struct BlockCache {
    ln: LayerNormCache,
    v1: Vec<f64>,
    main: Vec<f64>,
    conv: Vec<f64>,
    xs: Vec<f64>,
    gate: Vec<f64>,
    ssm: SelectiveCache,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl MambaBlockParams {
    pub fn init(config: MambaConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (c, e) = (config.model_dim, config.expand_dim);
        Ok(Self {
            model_dim: c,
            expand_dim: e,
            ln: LayerNorm::new(c),
            in_proj_main: Linear::init(c, e, false, rng),
            in_proj_gate: Linear::init(c, e, false, rng),
            conv: CausalConv1d::init(e, config.conv_width, rng),
            ssm: SsmParams::init(e, config.state_dim, rng),
            out_proj: Linear::init(e, c, false, rng),
        })
    }

    pub fn config(&self) -> MambaConfig {
        MambaConfig {
            model_dim: self.model_dim,
            expand_dim: self.expand_dim,
            state_dim: self.ssm.state_dim,
            conv_width: self.conv.width,
        }
    }

    /// Applies the block to one `n × model_dim` sequence.
    pub fn forward_sequence(&self, v: &[f64], cache: Option<&mut BlockCache>) -> Vec<f64> {
        let (v1, ln_cache) = self.ln.forward(v);
        let main = self.in_proj_main.forward(&v1);
        let conv = self.conv.forward(&main);
        let xs: Vec<f64> = conv.iter().map(|&x| silu(x)).collect();
        let gate = self.in_proj_gate.forward(&v1);
        let mut ssm_cache = cache.is_some().then(SelectiveCache::default);
        let y = self.ssm.selective_scan(&xs, ssm_cache.as_mut());
        let z: Vec<f64> = y.iter().zip(&gate).map(|(y, g)| y * silu(*g)).collect();
        let mut out = self.out_proj.forward(&z);
        out.iter_mut().zip(v).for_each(|(o, v)| *o += v);
        if let Some(cache) = cache {
            *cache = BlockCache {
                ln: ln_cache,
                v1,
                main,
                conv,
                xs,
                gate,
                ssm: ssm_cache.unwrap_or_default(),
                y,
                z,
            };
        }
        out
    }

    /// Reverse pass for one sequence; returns `dL/dv`.
    pub fn backward_sequence(
        &self,
        v: &[f64],
        cache: &BlockCache,
        dout: &[f64],
        grad: &mut MambaBlockParams,
    ) -> Vec<f64> {
        let dz = self.out_proj.backward(&cache.z, dout, &mut grad.out_proj);
        let mut dy = vec![0.0; dz.len()];
        let mut dgate = vec![0.0; dz.len()];
        for i in 0..dz.len() {
            let g = cache.gate[i];
            dy[i] = dz[i] * silu(g);
            dgate[i] = dz[i] * cache.y[i] * silu_grad(g);
        }
        let dxs = self.ssm.selective_backward(&cache.xs, &cache.ssm, &dy, &mut grad.ssm);
        let dconv: Vec<f64> = dxs.iter().zip(&cache.conv).map(|(d, x)| d * silu_grad(*x)).collect();
        let dmain = self.conv.backward(&cache.main, &dconv, &mut grad.conv);
        let mut dv1 = self.in_proj_main.backward(&cache.v1, &dmain, &mut grad.in_proj_main);
        let dv1_gate = self.in_proj_gate.backward(&cache.v1, &dgate, &mut grad.in_proj_gate);
        dv1.iter_mut().zip(dv1_gate).for_each(|(a, b)| *a += b);
        let mut dv = self.ln.backward(&cache.ln, &dv1, &mut grad.ln);
        debug_assert_eq!(dv.len(), v.len());
        dv.iter_mut().zip(dout).for_each(|(a, b)| *a += b);
        dv
    }

    fn check_input(&self, v: &SequenceTensor) -> Result<()> {
        if v.channels() != self.model_dim {
            return Err(contract(format!(
                "block expects {} channels, got {}",
                self.model_dim,
                v.channels()
            )));
        }
        Ok(())
    }
}

impl Parameters for MambaBlockParams {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.ln.params();
        v.extend(self.in_proj_main.params());
        v.extend(self.in_proj_gate.params());
        v.extend(self.conv.params());
        v.extend(self.ssm.params());
        v.extend(self.out_proj.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.ln.params_mut();
        v.extend(self.in_proj_main.params_mut());
        v.extend(self.in_proj_gate.params_mut());
        v.extend(self.conv.params_mut());
        v.extend(self.ssm.params_mut());
        v.extend(self.out_proj.params_mut());
        v
    }
}

pub fn mamba_block_forward(params: &MambaBlockParams, v: &SequenceTensor) -> Result<SequenceTensor> {
    params.check_input(v)?;
    let (b, n, c) = v.shape();
    let data: Vec<f64> = (0..b)
        .into_par_iter()
        .flat_map_iter(|bi| params.forward_sequence(v.sequence(bi), None))
        .collect();
    SequenceTensor::from_vec(b, n, c, data)
}

/// Parameter and input gradients of `Σ upstream ⊙ mamba_block_forward(params, v)`.
pub fn mamba_block_backward(
    params: &MambaBlockParams,
    v: &SequenceTensor,
    upstream: &SequenceTensor,
) -> Result<(MambaBlockParams, SequenceTensor)> {
    params.check_input(v)?;
    if upstream.shape() != v.shape() {
        return Err(contract("upstream gradient shape differs from block output"));
    }
    let (b, n, c) = v.shape();
    let mut grad = params.zeroed();
    let mut dv = Vec::with_capacity(b * n * c);
    for bi in 0..b {
        let mut cache = BlockCache::default();
        params.forward_sequence(v.sequence(bi), Some(&mut cache));
        dv.extend(params.backward_sequence(v.sequence(bi), &cache, upstream.sequence(bi), &mut grad));
    }
    Ok((grad, SequenceTensor::from_vec(b, n, c, dv)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{sigmoid, softplus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(b: usize, n: usize, c: usize, seed: u64) -> SequenceTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SequenceTensor::from_vec(b, n, c, crate::nn::uniform(&mut rng, b * n * c, 1.0)).unwrap()
    }

    #[test]
    fn zero_out_proj_is_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = MambaBlockParams::init(MambaConfig::new(6), &mut rng).unwrap();
        p.out_proj.weight.fill(0.0);
        let v = random_seq(2, 9, 6, 3);
        assert_eq!(mamba_block_forward(&p, &v).unwrap(), v);
    }

    #[test]
    fn shape_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MambaBlockParams::init(MambaConfig::new(16).with_state_dim(4), &mut rng).unwrap();
        let out = mamba_block_forward(&p, &random_seq(2, 64, 16, 4)).unwrap();
        assert_eq!(out.shape(), (2, 64, 16));
        assert!(mamba_block_forward(&p, &random_seq(1, 4, 8, 4)).is_err());
    }

    #[test]
    fn single_token_by_hand() {
        // c = e = 2, s = 1, identity projections, unit last conv tap
        let mut p = MambaBlockParams {
            model_dim: 2,
            expand_dim: 2,
            ln: LayerNorm::new(2),
            in_proj_main: Linear::identity(2),
            in_proj_gate: Linear::identity(2),
            conv: CausalConv1d { channels: 2, width: 4, kernel: vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] },
            ssm: SsmParams::zeros(2, 1),
            out_proj: Linear::identity(2),
        };
        p.ssm.w_b = vec![1.0, 1.0];
        p.ssm.w_c = vec![1.0, 1.0];
        p.ssm.bias_delta = 0.5;
        let v = [1.0, 3.0];

        let r = 1.0 / (1.0f64 + 1e-5).sqrt();
        let v1 = [-r, r];
        let xs = [v1[0] * sigmoid(v1[0]), v1[1] * sigmoid(v1[1])];
        let dt = softplus(0.5);
        let bc = xs[0] + xs[1];
        let expected: Vec<f64> = (0..2)
            .map(|ch| {
                let y = bc * dt * bc * xs[ch];
                let gate = v1[ch] * sigmoid(v1[ch]);
                v[ch] + y * gate
            })
            .collect();
        let out = mamba_block_forward(&p, &SequenceTensor::from_vec(1, 1, 2, v.to_vec()).unwrap()).unwrap();
        for (a, b) in out.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn causal_in_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = MambaBlockParams::init(MambaConfig::new(4).with_state_dim(3), &mut rng).unwrap();
        let v = random_seq(1, 12, 4, 9);
        let base = mamba_block_forward(&p, &v).unwrap();
        let mut bumped = v.clone();
        bumped.data_mut()[7 * 4 + 2] += 0.5;
        let out = mamba_block_forward(&p, &bumped).unwrap();
        assert_eq!(&out.data()[..7 * 4], &base.data()[..7 * 4]);
        assert_ne!(&out.data()[7 * 4..], &base.data()[7 * 4..]);
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MambaBlockParams::init(MambaConfig::new(3).with_state_dim(2), &mut rng).unwrap();
        let v = random_seq(1, 5, 3, 1);
        let (g, dv) = mamba_block_backward(&p, &v, &SequenceTensor::zeros(1, 5, 3)).unwrap();
        assert!(g.flatten().iter().all(|&x| x == 0.0));
        assert!(dv.data().iter().all(|&x| x == 0.0));
    }
}
