//! Impulse response of a fixed diagonal SSM, and a selective scan whose
//! step size reacts to the input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxseq::ssm::{discretize, selective_ssm_forward, ssm_scan, SsmParams};
use voxseq::SequenceTensor;

fn main() -> voxseq::Result<()> {
    let mut params = SsmParams::zeros(1, 2);
    params.a_log = vec![(0.5f64).ln(), (2.0f64).ln()];
    params.b = vec![1.0, 1.0];
    params.c_out = vec![1.0, -1.0];
    params.delta = 0.5;
    let ssm = params.fixed_discretization()?;
    println!("Ā = {:.4?}", ssm.abar);

    let mut impulse = vec![0.0; 8];
    impulse[0] = 1.0;
    let y = ssm_scan(&ssm, &SequenceTensor::from_vec(1, 8, 1, impulse)?)?;
    println!("impulse response {:.4?}", y.data());

    // per-token step sizes give a time-varying system
    let slow = discretize(&params, &[0.1])?;
    let fast = discretize(&params, &[2.0])?;
    println!("Ā at Δ=0.1 {:.4?}, at Δ=2 {:.4?}", slow.abar, fast.abar);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sel = SsmParams::init(4, 8, &mut rng);
    let u = SequenceTensor::from_vec(1, 6, 4, (0..24).map(|i| ((i * 7) % 5) as f64 - 2.0).collect())?;
    let out = selective_ssm_forward(&sel, &u)?;
    for k in 0..out.len() {
        println!("token {k}: {:+.4?}", out.token(0, k));
    }
    Ok(())
}
