//! Compares the block's analytic gradients against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxseq::mamba::{mamba_block_backward, mamba_block_forward, MambaBlockParams, MambaConfig};
use voxseq::nn::Parameters;
use voxseq::SequenceTensor;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn main() -> voxseq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = MambaBlockParams::init(MambaConfig::new(3).with_state_dim(4), &mut rng)?;
    let rand_seq = |rng: &mut ChaCha8Rng| {
        SequenceTensor::from_vec(2, 5, 3, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let x = rand_seq(&mut rng);
    let up = rand_seq(&mut rng);
    let loss = |p: &MambaBlockParams, x: &SequenceTensor| -> f64 {
        mamba_block_forward(p, x).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
    };
    let (grads, dx) = mamba_block_backward(&params, &x, &up)?;

    let h = 1e-5;
    let analytic = grads.flatten();
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let probe = |delta: f64| {
            let mut p = params.clone();
            let mut seen = 0;
            for slot in p.params_mut() {
                if i < seen + slot.len() {
                    slot[i - seen] += delta;
                    break;
                }
                seen += slot.len();
            }
            loss(&p, &x)
        };
        let numeric = (probe(h) - probe(-h)) / (2.0 * h);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    println!("{} parameters, worst relative error {worst:.2e}", analytic.len());

    let mut worst: f64 = 0.0;
    for i in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        worst = worst.max(rel_err(dx.data()[i], (loss(&params, &xp) - loss(&params, &xm)) / (2.0 * h)));
    }
    println!("{} inputs, worst relative error {worst:.2e}", x.data().len());
    Ok(())
}
