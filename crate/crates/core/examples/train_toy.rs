//! Trains the default toy model and prints the log, then compares against
//! the untrained model on the same held-out scenes.
//!
//! `cargo run --release --example train_toy [steps] [lr]`

use std::time::Instant;

use voxseq::train::{evaluate, train_toy_with, ToyModel, TrainConfig};

fn main() -> voxseq::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = TrainConfig::default();
    if let Some(steps) = args.next() {
        config.steps = steps.parse().expect("steps must be an integer");
    }
    if let Some(lr) = args.next() {
        config.lr = lr.parse().expect("lr must be a number");
    }

    let baseline = evaluate(&ToyModel::init(&config)?, config.eval_seeds.clone())?;
    println!("untrained mIoU {:.4}", baseline.miou.unwrap_or(f64::NAN));

    let start = Instant::now();
    let out = train_toy_with(&config, |e| {
        if e.step == 1 || e.miou.is_some() {
            println!("{}", serde_json::to_string(e).unwrap());
        }
    })?;
    let first = out.log.first().unwrap().loss;
    let last = out.log.last().unwrap().loss;
    println!("loss {first:.4} -> {last:.4} in {:.1}s", start.elapsed().as_secs_f64());
    println!("per-class IoU {:?}", out.report.per_class);
    println!("mIoU {:.4}, geometry IoU {:.4}", out.report.miou.unwrap_or(f64::NAN), out.report.geometry_iou.unwrap_or(f64::NAN));
    Ok(())
}
