//! Writes a small synthetic paired dataset, overfits the toy configuration on
//! it and reports the per-scale L1 error as training progresses.
//!
//! `cargo run --release --example train_toy -- [steps] [lr]`

use std::time::Instant;

use msg_unet::data::synthetic::write_synthetic_dataset;
use msg_unet::harness::{RunConfig, Trainer};

fn main() -> msg_unet::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let dir = std::env::temp_dir().join("msgu_train_toy");
    let mut config = RunConfig::default();
    if let Some(lr) = args.next().and_then(|s| s.parse().ok()) {
        config.train.optimizer.lr = lr;
    }
    config.data.root = dir.join("data");
    config.output.dir = dir.join("run");
    config.train.steps = steps;
    write_synthetic_dataset(&config.data.root, "train", 4, config.arch.finest(), 11)?;
    let mut trainer = Trainer::new(config)?;
    let start = Instant::now();
    while trainer.step < steps {
        let r = trainer.train_step()?;
        if trainer.step % 50 == 0 || trainer.step == 1 {
            let l1 = trainer.scale_l1()?;
            println!(
                "step {:5}  total_g {:8.4}  total_d {:6.4}  fm {:6.4}  perc {:6.4}  L1 {:?}  {:.1}s",
                trainer.step,
                r.total_g,
                r.total_d,
                r.fm,
                r.perc,
                l1,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
