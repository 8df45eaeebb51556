//! Finite-difference checks for the composite pieces: hierarchy, head and
//! interpolation.

mod common;

use common::*;
use rand::Rng;
use voxseq::head::{coarse_to_fine, coarse_to_fine_backward, Mlp};
use voxseq::hierarchy::{HierarchyConfig, HierarchyParams, LevelPlan};
use voxseq::loss::{softmax, softmax_backward};
use voxseq::nn::Parameters;
use voxseq::{FeatureGrid, GridDims, Scheme};

fn grid(rng: &mut impl Rng, dims: GridDims) -> FeatureGrid {
    FeatureGrid::from_vec(dims, random_vec(rng, dims.voxels() * dims.c, 1.0)).unwrap()
}

#[test]
fn hierarchy_gradients() {
    let mut rng = rng(11);
    for (i, (w, h, d)) in [(4, 2, 2), (3, 4, 2), (2, 2, 5)].into_iter().enumerate() {
        let cfg = HierarchyConfig {
            blocks_per_group: 1,
            state_dim: 2,
            conv_width: 2,
            scheme: Scheme::ALL[i * 2].into(),
            ..HierarchyConfig::new(2, 2)
        };
        let params = HierarchyParams::init(cfg, &mut rng).unwrap();
        let dims = GridDims::new(w, h, d, 2).unwrap();
        let plan = LevelPlan::new(&params.config, dims).unwrap();
        let x = grid(&mut rng, dims);
        let up = grid(&mut rng, dims);

        let (_, cache) = params.forward_cached(&plan, &x).unwrap();
        let mut g = params.zeroed();
        let dx = params.backward(&plan, &cache, &up, &mut g).unwrap();

        let loss_p = |p: &HierarchyParams| dot(p.forward(&plan, &x).unwrap().data(), up.data());
        let loss_x = |v: &[f64]| dot(params.forward(&plan, &FeatureGrid::from_vec(dims, v.to_vec()).unwrap()).unwrap().data(), up.data());
        let ep = max_rel_err(&g.flatten(), &numeric_param_grad(&params, loss_p, FD_STEP));
        let ex = max_rel_err(dx.data(), &numeric_grad(loss_x, x.data(), FD_STEP));
        assert!(ep < 1e-5 && ex < 1e-5, "{w}x{h}x{d}: params {ep:e}, input {ex:e}");
    }
}

#[test]
fn head_gradients() {
    let mut rng = rng(12);
    for _ in 0..10 {
        let mlp = Mlp::init(3, 4, &mut rng);
        let x = random_vec(&mut rng, 5 * 3, 2.0);
        let dy = random_vec(&mut rng, 5 * 4, 1.0);
        let (_, cache) = mlp.forward(&x);
        let mut g = mlp.zeroed();
        let dx = mlp.backward(&x, &cache, &dy, &mut g);
        let ep = max_rel_err(&g.flatten(), &numeric_param_grad(&mlp, |m| dot(&m.forward(&x).0, &dy), FD_STEP));
        let ex = max_rel_err(&dx, &numeric_grad(|v| dot(&mlp.forward(v).0, &dy), &x, FD_STEP));
        assert!(ep < 1e-5 && ex < 1e-5, "params {ep:e}, input {ex:e}");
    }
}

#[test]
fn interpolation_gradient() {
    let mut rng = rng(13);
    for _ in 0..10 {
        let src = GridDims::new(rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4), 2).unwrap();
        let dst = GridDims::new(src.w + rng.random_range(0..4), src.h * 2, src.d + 1, 2).unwrap();
        let x = grid(&mut rng, src);
        let up = grid(&mut rng, dst);
        let dx = coarse_to_fine_backward(src, &up).unwrap();
        let f = |v: &[f64]| dot(coarse_to_fine(&FeatureGrid::from_vec(src, v.to_vec()).unwrap(), dst).unwrap().data(), up.data());
        let e = max_rel_err(dx.data(), &numeric_grad(f, x.data(), FD_STEP));
        assert!(e < 1e-6, "{src} -> {dst}: {e:e}");
    }
}

#[test]
fn softmax_gradient() {
    let mut rng = rng(14);
    let dims = GridDims::new(4, 1, 1, 3).unwrap();
    let x = grid(&mut rng, dims);
    let up = grid(&mut rng, dims);
    let dx = softmax_backward(&softmax(&x), &up);
    let f = |v: &[f64]| dot(softmax(&FeatureGrid::from_vec(dims, v.to_vec()).unwrap()).data(), up.data());
    assert!(max_rel_err(dx.data(), &numeric_grad(f, x.data(), FD_STEP)) < 1e-6);
}
